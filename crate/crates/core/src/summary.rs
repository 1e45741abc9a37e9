//! Run summaries: nested key-value text with full-precision numbers.

use serde::{Deserialize, Serialize};

use crate::analysis::{ChshEstimate, CorrelationEstimate, ViolationReport};
use crate::spin::{chsh_analytic, correlation_analytic, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Full configuration text of the run.
    pub config: String,
    /// Event log the summary was computed from, for re-analyses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_events: Option<String>,
}

/// Event counts and fractions. `truth_*` entries use the simulated photon
/// content, which a real experiment would not see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_events: u64,
    pub n_accepted: u64,
    pub accepted_fraction: f64,
    pub truth_radiated_fraction: f64,
    pub truth_radiated_fraction_accepted: f64,
    pub truth_parallel_fraction: f64,
    pub truth_parallel_fraction_accepted: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_bare: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_radiative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub value: f64,
    pub stderr: f64,
    pub n_used: u64,
    /// `−a·b`, the photon-free prediction.
    pub singlet: f64,
}

impl CorrelationRow {
    pub fn from_estimate(est: &CorrelationEstimate) -> Self {
        let (a, b) = est.settings;
        CorrelationRow {
            a: a.to_array(),
            b: b.to_array(),
            value: est.value,
            stderr: est.stderr,
            n_used: est.n_used,
            singlet: correlation_analytic(&a, &b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshRow {
    pub a: [f64; 3],
    pub a2: [f64; 3],
    pub b: [f64; 3],
    pub b2: [f64; 3],
    pub s: f64,
    pub stderr: f64,
    pub singlet: f64,
}

impl ChshRow {
    pub fn from_estimate(settings: &[Direction; 4], est: &ChshEstimate) -> Self {
        let [a, a2, b, b2] = settings;
        ChshRow {
            a: a.to_array(),
            a2: a2.to_array(),
            b: b.to_array(),
            b2: b2.to_array(),
            s: est.s,
            stderr: est.stderr,
            singlet: chsh_analytic(a, a2, b, b2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    pub n_violation: u64,
    pub n_selected: u64,
    pub n_on_axis: u64,
    pub fraction: f64,
    pub ledger_consistent: bool,
    pub indices: Vec<u64>,
}

impl From<&ViolationReport> for ViolationRow {
    fn from(r: &ViolationReport) -> Self {
        ViolationRow {
            n_violation: r.n_violation,
            n_selected: r.n_selected,
            n_on_axis: r.n_on_axis,
            fraction: r.fraction(),
            ledger_consistent: r.ledger_consistent(),
            indices: r.indices.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Estimators that could not be evaluated, e.g. under-sampled settings.
    #[serde(default)]
    pub errors: Vec<String>,
    pub provenance: Provenance,
    pub run: RunStats,
    #[serde(default)]
    pub correlations: Vec<CorrelationRow>,
    #[serde(default)]
    pub chsh: Vec<ChshRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<ViolationRow>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("summary is representable");
        format!("# {} summary\n{body}", self.provenance.tool)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
