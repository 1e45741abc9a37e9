//! Coincidence selection and Bell-type estimators over event streams.
//!
//! Estimators only read the visible fields of an event (outcomes, settings,
//! directions, E_A). Photon content is consulted solely by the cross-checks
//! in [`ViolationScan`].
//!
//! All accumulators hold integer counts and sums, so partial results from
//! parallel workers merge exactly and in any order.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::event::Event;
use crate::spin::{chsh_combination, Direction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least 2 events with settings a={a:?}, b={b:?}, found {n_used}")]
    UnderSample {
        a: [f64; 3],
        b: [f64; 3],
        n_used: u64,
    },
    #[error("invalid coincidence cut {field}: {reason}")]
    InvalidCut { field: &'static str, reason: String },
}

/// Acceptance for A and B detected back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoincidenceCut {
    /// Detector cross-section over distance squared, in steradians.
    pub solid_angle: f64,
    /// Optional `[E_lo, E_hi]` window on the measured energy of A.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_window: Option<[f64; 2]>,
}

impl Default for CoincidenceCut {
    fn default() -> Self {
        CoincidenceCut {
            solid_angle: 4.0 * PI,
            energy_window: None,
        }
    }
}

impl CoincidenceCut {
    pub fn new(solid_angle: f64) -> Result<Self, AnalysisError> {
        let cut = CoincidenceCut {
            solid_angle,
            energy_window: None,
        };
        cut.validate()?;
        Ok(cut)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.solid_angle > 0.0 && self.solid_angle <= 4.0 * PI) {
            return Err(AnalysisError::InvalidCut {
                field: "cut.solid_angle",
                reason: format!("{} not in (0, 4π]", self.solid_angle),
            });
        }
        if let Some([lo, hi]) = self.energy_window {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(AnalysisError::InvalidCut {
                    field: "cut.energy_window",
                    reason: format!("[{lo}, {hi}] is not an ordered finite interval"),
                });
            }
        }
        Ok(())
    }

    /// Half-angle of the acceptance cone, from `2π(1 − cos θ) = ΔΩ`.
    pub fn half_angle(&self) -> f64 {
        (1.0 - self.solid_angle / (2.0 * PI))
            .clamp(-1.0, 1.0)
            .acos()
    }

    /// Whether `dir_b` lies in the cone around `−dir_a` and E_A is in window.
    pub fn accepts(&self, event: &Event) -> bool {
        // For unit vectors |a + b|² = 2(1 − cos θ) with θ the angle between
        // a and −b, so the cone subtends π|a + b|². Exactly zero when back to back.
        let sx = event.dir_a.x() + event.dir_b.x();
        let sy = event.dir_a.y() + event.dir_b.y();
        let sz = event.dir_a.z() + event.dir_b.z();
        let subtended = PI * (sx * sx + sy * sy + sz * sz);
        if subtended > self.solid_angle {
            return false;
        }
        match self.energy_window {
            Some([lo, hi]) => (lo..=hi).contains(&event.e_a),
            None => true,
        }
    }
}

/// Keeps the events passing `cut`.
pub fn coincidence_filter<'a, I>(
    events: I,
    cut: &'a CoincidenceCut,
) -> impl Iterator<Item = &'a Event>
where
    I: IntoIterator<Item = &'a Event>,
    I::IntoIter: 'a,
{
    events.into_iter().filter(move |e| cut.accepts(e))
}

/// Mean and standard error of `s_A·s_B`, in units of ħ²/4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_used: u64,
    pub settings: (Direction, Direction),
}

/// Count, sum and sum of squares of the ±1 spin products.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorrelationAccumulator {
    pub n: u64,
    pub sum: i64,
    pub sum_sq: i64,
}

impl CorrelationAccumulator {
    pub fn push(&mut self, product: i32) {
        self.n += 1;
        self.sum += product as i64;
        self.sum_sq += (product as i64) * (product as i64);
    }

    pub fn merge(&mut self, other: &CorrelationAccumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.n as f64
    }

    /// Sample variance (n − 1 denominator), exact numerator in integers.
    pub fn variance(&self) -> f64 {
        let n = self.n as i128;
        let numerator = n * self.sum_sq as i128 - (self.sum as i128) * (self.sum as i128);
        numerator as f64 / (n * (n - 1)) as f64
    }

    pub fn estimate(
        &self,
        a: Direction,
        b: Direction,
    ) -> Result<CorrelationEstimate, AnalysisError> {
        if self.n < 2 {
            return Err(AnalysisError::UnderSample {
                a: a.to_array(),
                b: b.to_array(),
                n_used: self.n,
            });
        }
        Ok(CorrelationEstimate {
            value: self.mean(),
            stderr: (self.variance().max(0.0) / self.n as f64).sqrt(),
            n_used: self.n,
            settings: (a, b),
        })
    }
}

/// Per-setting-pair accumulators, matched by exact direction equality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairTally {
    pairs: Vec<((Direction, Direction), CorrelationAccumulator)>,
}

impl PairTally {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&mut self, key: (Direction, Direction)) -> &mut CorrelationAccumulator {
        let pos = match self.pairs.iter().position(|(k, _)| *k == key) {
            Some(pos) => pos,
            None => {
                self.pairs.push((key, CorrelationAccumulator::default()));
                self.pairs.len() - 1
            }
        };
        &mut self.pairs[pos].1
    }

    pub fn push(&mut self, event: &Event) {
        self.slot((event.axis_a, event.axis_b))
            .push(event.spin_product());
    }

    pub fn merge(&mut self, other: &PairTally) {
        for (key, acc) in &other.pairs {
            self.slot(*key).merge(acc);
        }
    }

    pub fn accumulator(&self, a: &Direction, b: &Direction) -> CorrelationAccumulator {
        self.pairs
            .iter()
            .find(|((ka, kb), _)| ka == a && kb == b)
            .map(|(_, acc)| *acc)
            .unwrap_or_default()
    }

    pub fn estimate(
        &self,
        a: &Direction,
        b: &Direction,
    ) -> Result<CorrelationEstimate, AnalysisError> {
        self.accumulator(a, b).estimate(*a, *b)
    }

    pub fn chsh(
        &self,
        a: &Direction,
        a2: &Direction,
        b: &Direction,
        b2: &Direction,
    ) -> Result<ChshEstimate, AnalysisError> {
        let terms = [
            self.estimate(a, b)?,
            self.estimate(a, b2)?,
            self.estimate(a2, b)?,
            self.estimate(a2, b2)?,
        ];
        let s = chsh_combination(
            terms[0].value,
            terms[1].value,
            terms[2].value,
            terms[3].value,
        );
        let stderr = terms
            .iter()
            .map(|t| t.stderr * t.stderr)
            .sum::<f64>()
            .sqrt();
        Ok(ChshEstimate { s, stderr, terms })
    }
}

/// `S = |E(a,b) − E(a,b2) + E(a2,b) + E(a2,b2)|` with errors in quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshEstimate {
    pub s: f64,
    pub stderr: f64,
    /// `E(a,b), E(a,b2), E(a2,b), E(a2,b2)`.
    pub terms: [CorrelationEstimate; 4],
}

pub fn estimate_correlation<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    a: &Direction,
    b: &Direction,
) -> Result<CorrelationEstimate, AnalysisError> {
    let mut acc = CorrelationAccumulator::default();
    for e in events {
        if e.axis_a == *a && e.axis_b == *b {
            acc.push(e.spin_product());
        }
    }
    acc.estimate(*a, *b)
}

pub fn chsh_estimate<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    a: &Direction,
    a2: &Direction,
    b: &Direction,
    b2: &Direction,
) -> Result<ChshEstimate, AnalysisError> {
    let mut tally = PairTally::new();
    for e in events {
        tally.push(e);
    }
    tally.chsh(a, a2, b, b2)
}

/// Selected events whose visible spins break J_z conservation on the ledger axis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViolationReport {
    pub n_violation: u64,
    /// Events examined, i.e. everything handed to the scan.
    pub n_selected: u64,
    /// Events with both measurement axes on the ledger axis.
    pub n_on_axis: u64,
    pub indices: Vec<u64>,
    /// Flagged events whose photons do not absorb exactly the visible deficit.
    pub inconsistent: Vec<u64>,
}

impl ViolationReport {
    pub fn ledger_consistent(&self) -> bool {
        self.inconsistent.is_empty()
    }

    /// Flagged fraction among the on-axis events.
    pub fn fraction(&self) -> f64 {
        if self.n_on_axis == 0 {
            0.0
        } else {
            self.n_violation as f64 / self.n_on_axis as f64
        }
    }
}

/// Streaming form of [`detect_violations`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViolationScan {
    report: ViolationReport,
}

impl ViolationScan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: &Event) {
        let r = &mut self.report;
        r.n_selected += 1;
        if event.axis_a != Direction::Z || event.axis_b != Direction::Z {
            return;
        }
        r.n_on_axis += 1;
        let visible = event.outcome_a.value() + event.outcome_b.value();
        if visible == 0 {
            return;
        }
        r.n_violation += 1;
        r.indices.push(event.index);
        // truth cross-check: unobserved photons carry exactly the deficit
        let absorbed = event.k >= 1
            && event.jz_fermions == visible
            && 2 * event.jz_photons == 2 * event.jz_source - visible
            && event.photons.iter().map(|p| p.lab_jz).sum::<i32>() == event.jz_photons;
        if !absorbed {
            r.inconsistent.push(event.index);
        }
    }

    /// Merges a scan over later events; indices stay in stream order when
    /// partials are merged in order.
    pub fn merge(&mut self, other: &ViolationScan) {
        let r = &mut self.report;
        r.n_violation += other.report.n_violation;
        r.n_selected += other.report.n_selected;
        r.n_on_axis += other.report.n_on_axis;
        r.indices.extend_from_slice(&other.report.indices);
        r.inconsistent.extend_from_slice(&other.report.inconsistent);
    }

    pub fn report(&self) -> &ViolationReport {
        &self.report
    }

    pub fn into_report(self) -> ViolationReport {
        self.report
    }
}

pub fn detect_violations<'a>(events: impl IntoIterator<Item = &'a Event>) -> ViolationReport {
    let mut scan = ViolationScan::new();
    for e in events {
        scan.push(e);
    }
    scan.into_report()
}

/// Fraction of events passing `cut`, split by photon content: `(k = 0, k ≥ 1)`.
pub fn acceptance_by_content<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    cut: &CoincidenceCut,
) -> (Option<f64>, Option<f64>) {
    let mut counts = [[0u64; 2]; 2];
    for e in events {
        let row = usize::from(e.k >= 1);
        counts[row][0] += 1;
        counts[row][1] += u64::from(cut.accepts(e));
    }
    let frac = |c: [u64; 2]| (c[0] > 0).then(|| c[1] as f64 / c[0] as f64);
    (frac(counts[0]), frac(counts[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::{EmissionParams, PhotonRecord};
    use crate::event::{generate_events, Channel, GeneratorConfig};
    use crate::spin::{correlation_analytic, SpinOutcome};

    /// Hand-built event with the given channel on equal z axes.
    fn synthetic(index: u64, channel: Channel, up: bool) -> Event {
        let s = if up {
            SpinOutcome::Up
        } else {
            SpinOutcome::Down
        };
        let (outcome_b, jz_f, photons) = match channel {
            Channel::RadiativeParallel => (
                s,
                2 * s.value(),
                vec![PhotonRecord {
                    energy: 0.01,
                    direction: Direction::X,
                    helicity: 1,
                    lab_jz: -s.value(),
                }],
            ),
            _ => (s.flipped(), 0, vec![]),
        };
        Event {
            index,
            k: photons.len(),
            channel,
            axis_a: Direction::Z,
            axis_b: Direction::Z,
            outcome_a: s,
            outcome_b,
            dir_a: Direction::Z,
            dir_b: -Direction::Z,
            e_a: 0.5,
            jz_photons: photons.iter().map(|p| p.lab_jz).sum(),
            photons,
            jz_fermions: jz_f,
            jz_source: 0,
            pt_residual: [0.0, 0.0],
        }
    }

    #[test]
    fn bare_events_always_pass() {
        let mut cfg = GeneratorConfig::default();
        cfg.emission.alpha = 0.0;
        cfg.n_events = 2000;
        let events = generate_events(&cfg, 1).unwrap();
        let cut = CoincidenceCut::new(1e-30).unwrap();
        assert_eq!(coincidence_filter(&events, &cut).count(), 2000);
        let full = CoincidenceCut::new(4.0 * PI).unwrap();
        assert_eq!(coincidence_filter(&events, &full).count(), 2000);
    }

    #[test]
    fn full_acceptance_keeps_radiative_events() {
        let mut cfg = GeneratorConfig::default();
        cfg.emission.alpha = 0.5;
        cfg.smear_sigma = 10.0;
        cfg.n_events = 2000;
        let events = generate_events(&cfg, 1).unwrap();
        assert_eq!(
            coincidence_filter(&events, &CoincidenceCut::default()).count(),
            2000
        );
    }

    #[test]
    fn cut_validation() {
        assert!(CoincidenceCut::new(0.0).is_err());
        assert!(CoincidenceCut::new(13.0).is_err());
        let cut = CoincidenceCut {
            solid_angle: 1.0,
            energy_window: Some([0.6, 0.4]),
        };
        assert!(cut.validate().is_err());
        let half = CoincidenceCut::new(2.0 * PI).unwrap().half_angle();
        assert!((half - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn energy_window_applies_to_e_a() {
        let ev = synthetic(0, Channel::Bare, true);
        let mut cut = CoincidenceCut::default();
        cut.energy_window = Some([0.4, 0.6]);
        assert!(cut.accepts(&ev));
        cut.energy_window = Some([0.6, 0.9]);
        assert!(!cut.accepts(&ev));
    }

    #[test]
    fn bare_equal_axes_give_exactly_minus_one() {
        let events: Vec<Event> = (0..1000)
            .map(|i| synthetic(i, Channel::Bare, i % 3 == 0))
            .collect();
        let est = estimate_correlation(&events, &Direction::Z, &Direction::Z).unwrap();
        assert_eq!(est.value, -1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n_used, 1000);
    }

    #[test]
    fn under_sample_is_an_error() {
        let events = vec![synthetic(0, Channel::Bare, true)];
        assert!(matches!(
            estimate_correlation(&events, &Direction::Z, &Direction::Z),
            Err(AnalysisError::UnderSample { n_used: 1, .. })
        ));
        let err = chsh_estimate(
            &events,
            &Direction::Z,
            &Direction::X,
            &Direction::Z,
            &Direction::X,
        )
        .unwrap_err();
        assert!(err.to_string().contains("found 1"));
    }

    #[test]
    fn mixture_algebra() {
        // parallel fraction f shifts E(z,z) from -1 to -1 + 2f
        let n = 1000u64;
        let n_par = 150u64;
        let events: Vec<Event> = (0..n)
            .map(|i| {
                let channel = if i < n_par {
                    Channel::RadiativeParallel
                } else {
                    Channel::Bare
                };
                synthetic(i, channel, i % 2 == 0)
            })
            .collect();
        let f = n_par as f64 / n as f64;
        let est = estimate_correlation(&events, &Direction::Z, &Direction::Z).unwrap();
        assert!((est.value - (-1.0 + 2.0 * f)).abs() < 1e-12);
        let report = detect_violations(&events);
        assert_eq!(report.n_violation, n_par);
        assert_eq!(report.indices, (0..n_par).collect::<Vec<_>>());
        assert!(report.ledger_consistent());
    }

    #[test]
    fn violation_cross_check_catches_bad_ledger() {
        let mut ev = synthetic(7, Channel::RadiativeParallel, true);
        ev.photons[0].lab_jz = 0;
        ev.jz_photons = 0;
        let report = detect_violations([&ev]);
        assert_eq!(report.n_violation, 1);
        assert_eq!(report.inconsistent, vec![7]);
    }

    #[test]
    fn bare_stream_has_no_violations() {
        let mut cfg = GeneratorConfig::default();
        cfg.emission.alpha = 0.0;
        cfg.n_events = 5000;
        let events = generate_events(&cfg, 1).unwrap();
        let report = detect_violations(&events);
        assert_eq!(report.n_violation, 0);
        assert_eq!(report.n_on_axis, 5000);
    }

    #[test]
    fn merged_tallies_match_single_pass() {
        let mut cfg = GeneratorConfig {
            emission: EmissionParams {
                alpha: 0.1,
                ..EmissionParams::default()
            },
            ..GeneratorConfig::default()
        };
        cfg.settings_a = vec![Direction::Z, Direction::X];
        cfg.settings_b = vec![Direction::Z, Direction::in_xz_plane(45.0)];
        cfg.n_events = 6000;
        let events = generate_events(&cfg, 2).unwrap();
        let mut whole = PairTally::new();
        events.iter().for_each(|e| whole.push(e));
        let mut left = PairTally::new();
        let mut right = PairTally::new();
        events[..2500].iter().for_each(|e| left.push(e));
        events[2500..].iter().for_each(|e| right.push(e));
        right.merge(&left);
        for a in &cfg.settings_a {
            for b in &cfg.settings_b {
                assert_eq!(whole.accumulator(a, b), right.accumulator(a, b));
            }
        }
    }

    #[test]
    fn estimator_converges_like_inverse_sqrt_n() {
        // alpha = 0, 60 degrees between axes: E = -cos 60 = -0.5
        let mut cfg = GeneratorConfig::default();
        cfg.emission.alpha = 0.0;
        let a = Direction::Z;
        let b = Direction::in_xz_plane(60.0);
        cfg.settings_a = vec![a];
        cfg.settings_b = vec![b];
        let exact = correlation_analytic(&a, &b);
        let mut errors = vec![];
        for n in [1_000u64, 10_000, 100_000] {
            cfg.n_events = n;
            let events = generate_events(&cfg, 4).unwrap();
            let est = estimate_correlation(&events, &a, &b).unwrap();
            assert!((est.value - exact).abs() < 4.0 * est.stderr);
            errors.push(est.stderr);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10f64.sqrt()).abs() < 0.2, "stderr ratio {ratio}");
        }
    }
}
