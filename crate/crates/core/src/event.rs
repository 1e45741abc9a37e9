//! Event generation: photon content, spin-correlation channel, kinematics and
//! the angular-momentum ledger of each simulated production + measurement.
//!
//! The radiative spin effect is a classical mixture. Events without photons
//! are pure singlet measurements. Events with photons pick the parallel
//! channel with probability [`parallel_spin_probability`], where B's outcome
//! is the singlet outcome flipped (so `E(a,b) = +a·b` in that channel), and
//! otherwise keep singlet statistics.
//!
//! The ledger is kept along the fixed lab axis z in integer units: fermion
//! spins in ħ/2, photon projections in ħ. Every event satisfies
//! `jz_fermions + 2·jz_photons = 2·jz_source` exactly.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::emission::{
    available_energy, parallel_spin_probability, photon_count_distribution, sample_photons,
    EmissionError, EmissionParams, PhotonCountDistribution, PhotonRecord, MAX_PHOTON_COUNT,
};
use crate::rng::event_stream;
use crate::spin::{joint_distribution, make_singlet, Direction, SpinOutcome};

/// Resampling attempts for infeasible photon content before giving up.
pub const DEFAULT_MAX_RETRIES: usize = 100;

/// Events generated per parallel chunk in [`EventStream`].
const CHUNK_SIZE: usize = 16_384;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("invalid generator setting {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid emission parameters: {0}")]
    Emission(#[from] EmissionError),
    #[error("event {index}: photon sampling failed after {retries} retries: {source}")]
    PhotonSampling {
        index: u64,
        retries: usize,
        source: EmissionError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    /// No extra photons; singlet statistics, exactly back to back.
    Bare,
    /// Photons radiated, fermion spins stay antiparallel.
    RadiativeAntiparallel,
    /// Photons radiated and the fermion spins end up parallel.
    RadiativeParallel,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Bare => "bare",
            Channel::RadiativeAntiparallel => "radiative-antiparallel",
            Channel::RadiativeParallel => "radiative-parallel",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bare" => Ok(Channel::Bare),
            "radiative-antiparallel" => Ok(Channel::RadiativeAntiparallel),
            "radiative-parallel" => Ok(Channel::RadiativeParallel),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

/// One simulated production + measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub index: u64,
    pub k: usize,
    pub channel: Channel,
    pub axis_a: Direction,
    pub axis_b: Direction,
    pub outcome_a: SpinOutcome,
    pub outcome_b: SpinOutcome,
    pub dir_a: Direction,
    pub dir_b: Direction,
    pub e_a: f64,
    pub photons: Vec<PhotonRecord>,
    /// Fermion pair J_z along the ledger axis, units of ħ/2.
    pub jz_fermions: i32,
    /// Photon J_z along the ledger axis, units of ħ.
    pub jz_photons: i32,
    /// Initial total J_z, units of ħ.
    pub jz_source: i32,
    /// Summed transverse momentum of the photons, i.e. the imbalance of A+B.
    pub pt_residual: [f64; 2],
}

impl Event {
    /// Exact integer J_z conservation including the photons.
    pub fn ledger_closes(&self) -> bool {
        self.jz_fermions + 2 * self.jz_photons == 2 * self.jz_source
    }

    /// Product of the two outcomes, in units of ħ²/4.
    pub fn spin_product(&self) -> i32 {
        self.outcome_a.value() * self.outcome_b.value()
    }

    pub fn radiated_energy(&self) -> f64 {
        self.photons.iter().map(|p| p.energy).sum()
    }
}

/// Everything needed to generate a batch of events.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub emission: EmissionParams,
    pub settings_a: Vec<Direction>,
    pub settings_b: Vec<Direction>,
    /// Angular smearing of B (radians) per unit radiated energy fraction.
    pub smear_sigma: f64,
    pub seed: u64,
    pub n_events: u64,
    pub max_retries: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            emission: EmissionParams::default(),
            settings_a: vec![Direction::Z],
            settings_b: vec![Direction::Z],
            smear_sigma: 0.1,
            seed: 1,
            n_events: 10_000,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        self.emission.validate()?;
        let bad = |field, reason: &str| GenerationError::InvalidConfig {
            field,
            reason: reason.to_owned(),
        };
        if self.settings_a.is_empty() {
            return Err(bad("generator.settings_A", "must not be empty"));
        }
        if self.settings_b.is_empty() {
            return Err(bad("generator.settings_B", "must not be empty"));
        }
        if !(self.smear_sigma.is_finite() && self.smear_sigma >= 0.0) {
            return Err(bad("generator.smear_sigma", "must be finite and >= 0"));
        }
        if self.n_events == 0 {
            return Err(bad("generator.n_events", "must be >= 1"));
        }
        Ok(())
    }
}

/// Number of ways `n` photons with lab J_z in {−1, 0, +1} sum to `total`.
struct LedgerCounts {
    // rows n = 0..=max, column `total + n`
    rows: Vec<Vec<f64>>,
}

impl LedgerCounts {
    fn new(max: usize) -> Self {
        let mut rows = vec![vec![1.0]];
        for n in 1..=max {
            let prev = &rows[n - 1];
            let row = (0..=2 * n)
                .map(|col| {
                    // col - n is the target; previous row offset is n - 1
                    (0..3)
                        .filter_map(|shift| (col + shift).checked_sub(2))
                        .filter_map(|c| prev.get(c))
                        .sum()
                })
                .collect();
            rows.push(row);
        }
        LedgerCounts { rows }
    }

    fn count(&self, n: usize, total: i32) -> f64 {
        let col = total + n as i32;
        if col < 0 {
            return 0.0;
        }
        self.rows[n].get(col as usize).copied().unwrap_or(0.0)
    }

    /// Uniform assignment over all sequences with the required sum; one draw
    /// per photon.
    fn assign<R: Rng + ?Sized>(&self, photons: &mut [PhotonRecord], total: i32, rng: &mut R) {
        let mut remaining = total;
        let n = photons.len();
        for (i, photon) in photons.iter_mut().enumerate() {
            let rest = n - i - 1;
            let weights = [-1, 0, 1].map(|v| self.count(rest, remaining - v));
            let sum: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * sum;
            let mut pick = None;
            for (v, w) in [-1, 0, 1].into_iter().zip(weights) {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(v);
                if u < w {
                    break;
                }
                u -= w;
            }
            let v = pick.expect("ledger target reachable");
            photon.lab_jz = v;
            remaining -= v;
        }
        debug_assert_eq!(remaining, 0);
    }
}

/// Precomputed state for generating events under one configuration.
pub struct EventGenerator {
    config: GeneratorConfig,
    counts: PhotonCountDistribution,
    ledger: LedgerCounts,
}

impl EventGenerator {
    pub fn new(config: GeneratorConfig) -> Result<Self, GenerationError> {
        config.validate()?;
        let counts = photon_count_distribution(&config.emission)?;
        Ok(EventGenerator {
            ledger: LedgerCounts::new(config.emission.k_max.min(MAX_PHOTON_COUNT)),
            counts,
            config,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn count_distribution(&self) -> &PhotonCountDistribution {
        &self.counts
    }

    /// Generates event `index` from its own derived stream.
    ///
    /// Draw order: setting of A, setting of B (one uniform each, uniform
    /// choice from the lists), then everything in [`generate`](Self::generate).
    pub fn generate_indexed(&self, index: u64) -> Result<Event, GenerationError> {
        let mut rng = event_stream(self.config.seed, index);
        let a = pick(&self.config.settings_a, &mut rng);
        let b = pick(&self.config.settings_b, &mut rng);
        self.generate(index, a, b, &mut rng)
    }

    /// Generates one event for measurement axes `a` and `b`.
    ///
    /// Draw order: photon count; photons (see [`sample_photons`]), redrawing
    /// the count on infeasible samples; A's direction (`cos θ`, `φ`); the
    /// channel, when radiative; the joint spin outcome; the ledger sign, when
    /// parallel; one draw per photon for its lab J_z; B's smearing angle and
    /// azimuth, when radiative.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        index: u64,
        a: Direction,
        b: Direction,
        rng: &mut R,
    ) -> Result<Event, GenerationError> {
        let params = &self.config.emission;
        let (k, mut photons) = self.sample_content(index, rng)?;

        let dir_a = Direction::sample_isotropic(rng);

        let channel = if k == 0 {
            Channel::Bare
        } else if rng.random::<f64>() < parallel_spin_probability(params, k) {
            Channel::RadiativeParallel
        } else {
            Channel::RadiativeAntiparallel
        };

        let singlet = joint_distribution(&make_singlet(), &a, &b)
            .expect("singlet is normalized and axes are unit");
        let (outcome_a, mut outcome_b) = singlet.sample(rng);

        let jz_source = 0;
        let jz_fermions = if channel == Channel::RadiativeParallel {
            outcome_b = outcome_b.flipped();
            let drawn = if rng.random::<f64>() < 0.5 { 1 } else { -1 };
            2 * ledger_sign(&a, outcome_a, &b, outcome_b).unwrap_or(drawn)
        } else {
            0
        };

        let jz_photons = jz_source - jz_fermions / 2;
        self.ledger.assign(&mut photons, jz_photons, rng);

        let (dir_b, pt_residual) = if k == 0 {
            (-dir_a, [0.0, 0.0])
        } else {
            let fraction = photons.iter().map(|p| p.energy).sum::<f64>() / available_energy(params);
            let sigma = self.config.smear_sigma * fraction;
            let angle: f64 = Normal::new(0.0, sigma)
                .expect("smearing width is finite and non-negative")
                .sample(rng);
            let azimuth = std::f64::consts::TAU * rng.random::<f64>();
            let pt = photons.iter().fold([0.0, 0.0], |acc, p| {
                let t = p.transverse_momentum();
                [acc[0] + t[0], acc[1] + t[1]]
            });
            ((-dir_a).tilted(angle.abs(), azimuth), pt)
        };

        Ok(Event {
            index,
            k,
            channel,
            axis_a: a,
            axis_b: b,
            outcome_a,
            outcome_b,
            dir_a,
            dir_b,
            e_a: params.e_a,
            photons,
            jz_fermions,
            jz_photons,
            jz_source,
            pt_residual,
        })
    }

    fn sample_content<R: Rng + ?Sized>(
        &self,
        index: u64,
        rng: &mut R,
    ) -> Result<(usize, Vec<PhotonRecord>), GenerationError> {
        let mut last_error = None;
        for _ in 0..=self.config.max_retries {
            let k = self.counts.sample(rng);
            match sample_photons(k, &self.config.emission, rng) {
                Ok(photons) => return Ok((k, photons)),
                Err(e) => last_error = Some(e),
            }
        }
        Err(GenerationError::PhotonSampling {
            index,
            retries: self.config.max_retries,
            source: last_error.expect("at least one attempt"),
        })
    }
}

fn pick<R: Rng + ?Sized>(settings: &[Direction], rng: &mut R) -> Direction {
    let u: f64 = rng.random();
    let i = ((u * settings.len() as f64) as usize).min(settings.len() - 1);
    settings[i]
}

/// Sign of the parallel pair's J_z when a measurement was made along the
/// ledger axis, so the ledger agrees with what was observed there.
fn ledger_sign(a: &Direction, sa: SpinOutcome, b: &Direction, sb: SpinOutcome) -> Option<i32> {
    let on_axis = |d: &Direction| d.x() == 0.0 && d.y() == 0.0;
    if on_axis(a) {
        Some(sa.value() * a.z().signum() as i32)
    } else if on_axis(b) {
        Some(sb.value() * b.z().signum() as i32)
    } else {
        None
    }
}

/// Generates a single event with the given settings.
pub fn generate_event<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    a: Direction,
    b: Direction,
    rng: &mut R,
) -> Result<Event, GenerationError> {
    EventGenerator::new(config.clone())?.generate(0, a, b, rng)
}

/// Lazily generated, index-ordered stream of a run's events.
///
/// Events are produced in parallel chunks when more than one worker is
/// requested. Event `i` depends only on `(seed, i)`, so the stream is the
/// same for every worker count.
pub struct EventStream {
    generator: EventGenerator,
    next: u64,
    end: u64,
    buffer: VecDeque<Result<Event, GenerationError>>,
    pool: Option<rayon::ThreadPool>,
}

impl EventStream {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.pool = if workers > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .ok()
        } else {
            None
        };
        self
    }

    pub fn generator(&self) -> &EventGenerator {
        &self.generator
    }

    fn refill(&mut self) {
        let start = self.next;
        let end = (start + CHUNK_SIZE as u64).min(self.end);
        let generator = &self.generator;
        let chunk: Vec<_> = match &self.pool {
            Some(pool) => pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|i| generator.generate_indexed(i))
                    .collect()
            }),
            None => (start..end)
                .map(|i| generator.generate_indexed(i))
                .collect(),
        };
        self.buffer.extend(chunk);
        self.next = end;
    }
}

impl Iterator for EventStream {
    type Item = Result<Event, GenerationError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.buffer.is_empty() && self.next < self.end {
            self.refill();
        }
        self.buffer.pop_front()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.buffer.len() + (self.end - self.next) as usize;
        (n, Some(n))
    }
}

/// Stream of `config.n_events` events, generated on the calling thread unless
/// [`EventStream::with_workers`] is used.
pub fn generate_batch(config: &GeneratorConfig) -> Result<EventStream, GenerationError> {
    let generator = EventGenerator::new(config.clone())?;
    Ok(EventStream {
        end: config.n_events,
        generator,
        next: 0,
        buffer: VecDeque::new(),
        pool: None,
    })
}

/// Collects a whole batch, failing on the first generation error.
pub fn generate_events(
    config: &GeneratorConfig,
    workers: usize,
) -> Result<Vec<Event>, GenerationError> {
    generate_batch(config)?.with_workers(workers).collect()
}
