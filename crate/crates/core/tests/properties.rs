use std::io::BufReader;

use epr_softphoton::analysis::acceptance_by_content;
use epr_softphoton::eventlog::{EventLogReader, EventLogWriter};
use epr_softphoton::{
    chsh_estimate, collapse_after_a, detect_violations, estimate_correlation, generate_events,
    joint_distribution, make_singlet, photon_count_distribution, Channel, CoincidenceCut,
    Direction, EmissionParams, GeneratorConfig, SpinOutcome,
};
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = Direction> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU)
        .prop_map(|(c, phi)| Direction::from_angles(c.acos(), phi))
}

fn emission() -> impl Strategy<Value = EmissionParams> {
    (0.0f64..0.5, -6.0f64..-2.0, 0.0f64..20.0, 0.5f64..3.0, 1usize..10).prop_map(
        |(alpha, log_emin, kappa_par, kappa_rad, k_max)| EmissionParams {
            alpha,
            e_min: 10f64.powf(log_emin),
            kappa_par,
            kappa_rad,
            k_max,
            ..EmissionParams::default()
        },
    )
}

fn generator(emission: EmissionParams, seed: u64, n: u64) -> GeneratorConfig {
    GeneratorConfig {
        emission,
        settings_a: vec![Direction::Z, Direction::X],
        settings_b: vec![Direction::Z, Direction::in_xz_plane(30.0)],
        seed,
        n_events: n,
        ..GeneratorConfig::default()
    }
}

fn zz(alpha: f64, kappa_par: f64, n: u64, seed: u64) -> GeneratorConfig {
    let mut c = GeneratorConfig::default();
    c.emission.alpha = alpha;
    c.emission.e_min = 1e-4;
    c.emission.kappa_par = kappa_par;
    c.n_events = n;
    c.seed = seed;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_event_closes_its_ledger(p in emission(), seed in any::<u64>()) {
        for e in generate_events(&generator(p, seed, 400), 1).unwrap() {
            prop_assert!(e.ledger_closes());
            let photon_jz: i32 = e.photons.iter().map(|ph| ph.lab_jz).sum();
            prop_assert_eq!(photon_jz, e.jz_photons);
            prop_assert_eq!(e.jz_fermions + 2 * e.jz_photons, 2 * e.jz_source);
        }
    }

    #[test]
    fn kinematics_are_back_to_back_or_bounded(p in emission(), seed in any::<u64>()) {
        for e in generate_events(&generator(p, seed, 400), 1).unwrap() {
            if e.channel == Channel::Bare {
                prop_assert_eq!(e.k, 0);
                prop_assert_eq!(e.dir_b, -e.dir_a);
                prop_assert_eq!(e.pt_residual, [0.0, 0.0]);
            } else {
                prop_assert!(e.k >= 1);
                let pt = e.pt_residual[0].hypot(e.pt_residual[1]);
                prop_assert!(pt <= e.radiated_energy() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn violations_only_come_from_radiative_events(p in emission(), seed in any::<u64>()) {
        let mut c = generator(p, seed, 400);
        c.settings_a = vec![Direction::Z];
        c.settings_b = vec![Direction::Z];
        let events = generate_events(&c, 1).unwrap();
        let report = detect_violations(&events);
        prop_assert!(report.ledger_consistent());
        for &i in &report.indices {
            prop_assert!(events[i as usize].k >= 1);
        }
    }

    #[test]
    fn lowering_the_cutoff_increases_radiation(p in emission(), shrink in 1.5f64..100.0) {
        prop_assume!(p.alpha > 1e-3);
        let lower = EmissionParams { e_min: p.e_min / shrink, ..p.clone() };
        let before = photon_count_distribution(&p).unwrap().radiated_fraction();
        let after = photon_count_distribution(&lower).unwrap().radiated_fraction();
        prop_assert!(after > before, "{} -> {}", before, after);
    }

    #[test]
    fn collapsed_states_are_normalized(a in direction(), b in direction()) {
        let singlet = make_singlet();
        let joint = joint_distribution(&singlet, &a, &b).unwrap();
        for outcome in SpinOutcome::BOTH {
            let state = collapse_after_a(&singlet, &a, outcome).unwrap();
            prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
            let conditional = joint.probability(outcome, SpinOutcome::Up) / joint.marginal_a(outcome);
            prop_assert!((state.probability(&b, SpinOutcome::Up) - conditional).abs() < 1e-12);
        }
    }

    #[test]
    fn event_log_round_trips(p in emission(), seed in any::<u64>()) {
        let events = generate_events(&generator(p, seed, 50), 1).unwrap();
        let mut w = EventLogWriter::new(Vec::new(), "generator.seed = 1").unwrap();
        for e in &events {
            w.write_event(e).unwrap();
        }
        let bytes = w.finish().unwrap();
        let mut reader = EventLogReader::new(BufReader::new(bytes.as_slice())).unwrap();
        let read: Vec<_> = reader.by_ref().collect::<Result<_, _>>().unwrap();
        prop_assert!(reader.is_complete());
        prop_assert_eq!(read.len(), events.len());
        for (r, e) in read.iter().zip(&events) {
            prop_assert_eq!(
                (r.index, r.k, r.channel, r.outcome_a, r.outcome_b, r.jz_fermions, r.jz_photons),
                (e.index, e.k, e.channel, e.outcome_a, e.outcome_b, e.jz_fermions, e.jz_photons)
            );
            prop_assert_eq!(r.dir_a, e.dir_a);
            prop_assert_eq!(r.dir_b, e.dir_b);
            prop_assert_eq!(r.pt_residual, e.pt_residual);
            for (rp, ep) in r.photons.iter().zip(&e.photons) {
                prop_assert_eq!((rp.energy, rp.helicity, rp.lab_jz), (ep.energy, ep.helicity, ep.lab_jz));
            }
        }
    }
}

#[test]
fn bare_channel_is_perfectly_anticorrelated() {
    let events = generate_events(&zz(0.1, 5.0, 100_000, 21), 4).unwrap();
    let bare: Vec<_> = events.iter().filter(|e| e.channel == Channel::Bare).collect();
    assert!(bare.len() > 10_000);
    let est = estimate_correlation(bare, &Direction::Z, &Direction::Z).unwrap();
    assert_eq!((est.value, est.stderr), (-1.0, 0.0));
}

#[test]
fn correlation_degrades_monotonically_with_kappa_par() {
    let mut last: Option<(f64, f64)> = None;
    for (i, kappa_par) in [0.0, 1.0, 2.5, 5.0, 10.0].into_iter().enumerate() {
        let events = generate_events(&zz(0.1, kappa_par, 100_000, 30 + i as u64), 4).unwrap();
        let est = estimate_correlation(&events, &Direction::Z, &Direction::Z).unwrap();
        let (value, err) = (est.value.abs(), est.stderr);
        if let Some((prev, prev_err)) = last {
            assert!(value <= prev + 4.0 * (err * err + prev_err * prev_err).sqrt(), "{prev} -> {value}");
        }
        last = Some((value, err));
    }
}

#[test]
fn vanishing_budget_keeps_spins_antiparallel() {
    let mut fractions = Vec::new();
    for m_b in [0.2, 0.45, 0.49, 0.499] {
        let mut c = zz(0.3, 5.0, 20_000, 40);
        c.emission.m_b = m_b;
        c.emission.e_min = 1e-7;
        let events = generate_events(&c, 2).unwrap();
        let parallel = events.iter().filter(|e| e.channel == Channel::RadiativeParallel).count();
        fractions.push(parallel as f64 / events.len() as f64);
    }
    assert!(fractions.windows(2).all(|w| w[1] <= w[0]), "{fractions:?}");
    assert!(fractions[3] < 1e-3, "{fractions:?}");
}

#[test]
fn bare_limit_recovers_singlet_statistics() {
    let mut p0 = Vec::new();
    for alpha in [1e-1, 1e-2, 1e-3, 1e-4, 0.0] {
        let mut p = EmissionParams::default();
        p.alpha = alpha;
        p0.push(photon_count_distribution(&p).unwrap().p(0));
    }
    assert!(p0.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(p0[4], 1.0);
    assert!(1.0 - p0[3] < 1e-3);

    let [a, a2, b, b2] = [0.0, 90.0, 45.0, 135.0].map(Direction::in_xz_plane);
    let mut c = zz(1e-5, 5.0, 200_000, 50);
    c.settings_a = vec![a, a2];
    c.settings_b = vec![b, b2];
    let s = chsh_estimate(&generate_events(&c, 4).unwrap(), &a, &a2, &b, &b2).unwrap();
    assert!((s.s - 2.0 * 2f64.sqrt()).abs() < 4.0 * s.stderr, "{s:?}");
}

#[test]
fn chsh_respects_tsirelson_without_radiation() {
    for (i, (t1, t2)) in [(0.0, 90.0), (10.0, 80.0), (0.0, 60.0)].into_iter().enumerate() {
        let [a, a2] = [t1, t2].map(Direction::in_xz_plane);
        let [b, b2] = [(t1 + t2) / 2.0, (t1 + t2) / 2.0 + 90.0].map(Direction::in_xz_plane);
        let mut c = zz(0.0, 0.0, 100_000, 60 + i as u64);
        c.settings_a = vec![a, a2];
        c.settings_b = vec![b, b2];
        let s = chsh_estimate(&generate_events(&c, 4).unwrap(), &a, &a2, &b, &b2).unwrap();
        assert!(s.s <= 2.0 * 2f64.sqrt() + 4.0 * s.stderr, "{s:?}");
    }
}

#[test]
fn tightening_the_cut_never_raises_the_radiative_share() {
    let events = generate_events(&zz(0.1, 5.0, 100_000, 70), 4).unwrap();
    let mut last = f64::INFINITY;
    for omega in [4.0 * std::f64::consts::PI, 1e-4, 1e-6, 1e-8] {
        let cut = CoincidenceCut::new(omega).unwrap();
        let (bare, radiative) = acceptance_by_content(&events, &cut);
        assert_eq!(bare, Some(1.0));
        let accepted: Vec<_> = events.iter().filter(|e| cut.accepts(e)).collect();
        let share = accepted.iter().filter(|e| e.k >= 1).count() as f64 / accepted.len() as f64;
        assert!(share <= last, "radiative share rose to {share} at {omega}");
        assert!(radiative.unwrap() <= 1.0);
        last = share;
    }
}
