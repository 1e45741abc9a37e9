//! Monte Carlo simulation of EPR-Bohm spin correlations when the produced
//! pair may be accompanied by an undetermined number of soft photons.
//!
//! * [`spin`]: singlet state, projective measurements, analytic correlations.
//! * [`emission`]: soft-photon count law, spectrum and parallel-spin suppression.
//! * [`event`]: per-event generation with an exact angular-momentum ledger.
//! * [`analysis`]: coincidence selection, correlation/CHSH estimators and
//!   apparent-violation scans.
//! * [`config`], [`eventlog`], [`summary`], [`runner`]: the batch runner
//!   behind the `epr-sim` command line tool.

pub mod analysis;
pub mod config;
pub mod emission;
pub mod event;
pub mod eventlog;
pub mod rng;
pub mod runner;
pub mod spin;
pub mod summary;

pub use analysis::{
    chsh_estimate, coincidence_filter, detect_violations, estimate_correlation, AnalysisError,
    ChshEstimate, CoincidenceCut, CorrelationAccumulator, CorrelationEstimate, ViolationReport,
};
pub use emission::{
    available_energy, parallel_spin_probability, photon_count_distribution, sample_photons,
    EmissionError, EmissionParams, PhotonCountDistribution, PhotonRecord,
};
pub use event::{
    generate_batch, generate_event, generate_events, Channel, Event, EventGenerator, EventStream,
    GenerationError, GeneratorConfig,
};
pub use spin::{
    chsh_analytic, collapse_after_a, correlation_analytic, joint_distribution, make_singlet,
    measure_pair, Direction, JointDistribution, QubitState, SpinError, SpinOutcome,
    TwoQubitSpinState,
};
