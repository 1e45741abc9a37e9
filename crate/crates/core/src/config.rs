//! Run and sweep configuration files.
//!
//! The on-disk format is flat key-value text with dotted section names, one
//! setting per line:
//!
//! ```text
//! generator.seed = 42
//! generator.n_events = 100000
//! generator.settings_A = [[0.0, 0.0, 1.0]]
//! emission.alpha = 0.0072992700729927005
//! emission.E_min = 0.001
//! cut.solid_angle = 0.01
//! analysis.correlations = [[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]]
//! ```
//!
//! This is a subset of TOML, which is what parses it; bracketed `[section]`
//! tables are therefore accepted too. Directions are `[x, y, z]` arrays or
//! `{ theta = .., phi = .. }` polar angles in degrees.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::CoincidenceCut;
use crate::emission::EmissionParams;
use crate::event::{GenerationError, GeneratorConfig, DEFAULT_MAX_RETRIES};
use crate::spin::Direction;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EPR_SIM_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// The offending field, when the error concerns a single setting.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl From<GenerationError> for ConfigError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::InvalidConfig { field, reason } => ConfigError::invalid(field, reason),
            GenerationError::Emission(crate::emission::EmissionError::InvalidParameter {
                field,
                reason,
            }) => ConfigError::invalid(field, reason),
            other => ConfigError::invalid("generator", other.to_string()),
        }
    }
}

/// Estimators requested for a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisRequest {
    /// `(a, b)` setting pairs for `E(a,b)`.
    pub correlations: Vec<(Direction, Direction)>,
    /// `(a, a2, b, b2)` quadruples for the CHSH statistic.
    pub chsh: Vec<[Direction; 4]>,
    pub violations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; falls back to `$EPR_SIM_OUT_DIR`, then `out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub events: String,
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            events: "events.tsv".into(),
            summary: "summary.txt".into(),
        }
    }
}

impl OutputConfig {
    pub fn resolve_dir(&self) -> PathBuf {
        self.dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub cut: CoincidenceCut,
    pub analysis: AnalysisRequest,
    pub output: OutputConfig,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorConfig::default(),
            cut: CoincidenceCut::default(),
            analysis: AnalysisRequest {
                correlations: vec![(Direction::Z, Direction::Z)],
                chsh: vec![],
                violations: true,
            },
            output: OutputConfig::default(),
            log_level: "info".into(),
        }
    }
}

const LOG_LEVELS: [&str; 5] = ["error", "warn", "info", "debug", "trace"];

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.generator.validate()?;
        if self.generator.seed > i64::MAX as u64 {
            return Err(ConfigError::invalid(
                "generator.seed",
                "must fit in a signed 64-bit integer",
            ));
        }
        if let Err(crate::analysis::AnalysisError::InvalidCut { field, reason }) =
            self.cut.validate()
        {
            return Err(ConfigError::invalid(field, reason));
        }
        let in_a = |d: &Direction| self.generator.settings_a.contains(d);
        let in_b = |d: &Direction| self.generator.settings_b.contains(d);
        for (i, (a, b)) in self.analysis.correlations.iter().enumerate() {
            if !in_a(a) || !in_b(b) {
                return Err(ConfigError::invalid(
                    format!("analysis.correlations[{i}]"),
                    "settings must appear in generator.settings_A / settings_B",
                ));
            }
        }
        for (i, [a, a2, b, b2]) in self.analysis.chsh.iter().enumerate() {
            if !in_a(a) || !in_a(a2) || !in_b(b) || !in_b(b2) {
                return Err(ConfigError::invalid(
                    format!("analysis.chsh[{i}]"),
                    "settings must appear in generator.settings_A / settings_B",
                ));
            }
        }
        if !LOG_LEVELS.contains(&self.log_level.as_str()) {
            return Err(ConfigError::invalid(
                "log.level",
                format!("{:?} is not one of {LOG_LEVELS:?}", self.log_level),
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_named(text, "config")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse_named(&text, &path.display().to_string())
    }

    fn parse_named(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_owned(),
            message: e.to_string(),
        })?;
        let config = raw.into_config()?;
        config.validate()?;
        Ok(config)
    }

    /// Dotted key-value text that parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let value = toml::Value::try_from(RawConfig::from_config(self))
            .expect("configuration is representable");
        let mut out = String::new();
        write_dotted(&mut out, "", &value);
        out
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn write_dotted(out: &mut String, prefix: &str, value: &toml::Value) {
    match value {
        toml::Value::Table(table) => {
            for (key, v) in table {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                write_dotted(out, &path, v);
            }
        }
        leaf => {
            out.push_str(prefix);
            out.push_str(" = ");
            out.push_str(&leaf.to_string());
            out.push('\n');
        }
    }
}

/// A direction as written in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum DirectionSpec {
    Vector([f64; 3]),
    /// Polar angle from +z and azimuth, both in degrees.
    Angles {
        theta: f64,
        phi: f64,
    },
}

impl DirectionSpec {
    fn resolve(&self, field: &str) -> Result<Direction, ConfigError> {
        match *self {
            DirectionSpec::Vector([x, y, z]) => {
                Direction::new(x, y, z).map_err(|e| ConfigError::invalid(field, e.to_string()))
            }
            DirectionSpec::Angles { theta, phi } => {
                if !(theta.is_finite() && phi.is_finite()) {
                    return Err(ConfigError::invalid(field, "angles must be finite"));
                }
                Ok(Direction::from_angles(theta.to_radians(), phi.to_radians()))
            }
        }
    }
}

impl From<Direction> for DirectionSpec {
    fn from(d: Direction) -> Self {
        DirectionSpec::Vector(d.to_array())
    }
}

fn resolve_all(specs: &[DirectionSpec], field: &str) -> Result<Vec<Direction>, ConfigError> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.resolve(&format!("{field}[{i}]")))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawGenerator {
    seed: u64,
    n_events: u64,
    smear_sigma: f64,
    max_retries: usize,
    #[serde(rename = "settings_A")]
    settings_a: Vec<DirectionSpec>,
    #[serde(rename = "settings_B")]
    settings_b: Vec<DirectionSpec>,
}

impl Default for RawGenerator {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        RawGenerator {
            seed: g.seed,
            n_events: g.n_events,
            smear_sigma: g.smear_sigma,
            max_retries: DEFAULT_MAX_RETRIES,
            settings_a: g.settings_a.into_iter().map(Into::into).collect(),
            settings_b: g.settings_b.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawAnalysis {
    /// Absent means every (A, B) settings pair.
    correlations: Option<Vec<[DirectionSpec; 2]>>,
    chsh: Vec<[DirectionSpec; 4]>,
    violations: bool,
}

impl Default for RawAnalysis {
    fn default() -> Self {
        RawAnalysis {
            correlations: None,
            chsh: vec![],
            violations: true,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawLog {
    level: String,
}

impl Default for RawLog {
    fn default() -> Self {
        RawLog {
            level: "info".into(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    /// Written into output headers; ignored on input so a header can be
    /// replayed as a configuration.
    #[serde(skip_serializing)]
    provenance: Option<toml::Table>,
    generator: RawGenerator,
    emission: EmissionParams,
    cut: CoincidenceCut,
    analysis: RawAnalysis,
    output: OutputConfig,
    log: RawLog,
}

impl RawConfig {
    fn into_config(self) -> Result<RunConfig, ConfigError> {
        let g = self.generator;
        let generator = GeneratorConfig {
            emission: self.emission,
            settings_a: resolve_all(&g.settings_a, "generator.settings_A")?,
            settings_b: resolve_all(&g.settings_b, "generator.settings_B")?,
            smear_sigma: g.smear_sigma,
            seed: g.seed,
            n_events: g.n_events,
            max_retries: g.max_retries,
        };
        let correlations = match &self.analysis.correlations {
            Some(pairs) => pairs
                .iter()
                .enumerate()
                .map(|(i, [a, b])| {
                    let field = format!("analysis.correlations[{i}]");
                    Ok((a.resolve(&field)?, b.resolve(&field)?))
                })
                .collect::<Result<_, ConfigError>>()?,
            None => generator
                .settings_a
                .iter()
                .flat_map(|&a| generator.settings_b.iter().map(move |&b| (a, b)))
                .collect(),
        };
        let chsh = self
            .analysis
            .chsh
            .iter()
            .enumerate()
            .map(|(i, quad)| {
                let field = format!("analysis.chsh[{i}]");
                Ok([
                    quad[0].resolve(&field)?,
                    quad[1].resolve(&field)?,
                    quad[2].resolve(&field)?,
                    quad[3].resolve(&field)?,
                ])
            })
            .collect::<Result<_, ConfigError>>()?;
        Ok(RunConfig {
            generator,
            cut: self.cut,
            analysis: AnalysisRequest {
                correlations,
                chsh,
                violations: self.analysis.violations,
            },
            output: self.output,
            log_level: self.log.level,
        })
    }

    fn from_config(c: &RunConfig) -> Self {
        let g = &c.generator;
        RawConfig {
            provenance: None,
            generator: RawGenerator {
                seed: g.seed,
                n_events: g.n_events,
                smear_sigma: g.smear_sigma,
                max_retries: g.max_retries,
                settings_a: g.settings_a.iter().map(|&d| d.into()).collect(),
                settings_b: g.settings_b.iter().map(|&d| d.into()).collect(),
            },
            emission: g.emission.clone(),
            cut: c.cut.clone(),
            analysis: RawAnalysis {
                correlations: Some(
                    c.analysis
                        .correlations
                        .iter()
                        .map(|&(a, b)| [a.into(), b.into()])
                        .collect(),
                ),
                chsh: c.analysis.chsh.iter().map(|q| q.map(Into::into)).collect(),
                violations: c.analysis.violations,
            },
            output: c.output.clone(),
            log: RawLog {
                level: c.log_level.clone(),
            },
        }
    }
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "kappa_par")]
    KappaPar,
    #[serde(rename = "kappa_rad")]
    KappaRad,
    #[serde(rename = "E_min")]
    EMin,
    #[serde(rename = "solid_angle")]
    SolidAngle,
    #[serde(rename = "smear_sigma")]
    SmearSigma,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::KappaPar => "kappa_par",
            SweepParameter::KappaRad => "kappa_rad",
            SweepParameter::EMin => "E_min",
            SweepParameter::SolidAngle => "solid_angle",
            SweepParameter::SmearSigma => "smear_sigma",
        }
    }
}

/// One parameter varied over a grid; every other setting comes from the run
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// Events per grid point; defaults to the run's `generator.n_events`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_events: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweepFile {
    sweep: SweepSpec,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.is_empty() {
            return Err(ConfigError::invalid("sweep.grid", "must not be empty"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::invalid("sweep.grid", "values must be finite"));
        }
        let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(ConfigError::invalid(
                "sweep.grid",
                "must be strictly monotone",
            ));
        }
        if self.n_events == Some(0) {
            return Err(ConfigError::invalid("sweep.n_events", "must be >= 1"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawSweepFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: "sweep spec".into(),
            message: e.to_string(),
        })?;
        raw.sweep.validate()?;
        Ok(raw.sweep)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                origin: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Dotted key-value text for the `sweep` section.
    pub fn to_text(&self) -> String {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            sweep: &'a SweepSpec,
        }
        let value = toml::Value::try_from(Wrapper { sweep: self }).expect("sweep is representable");
        let mut out = String::new();
        write_dotted(&mut out, "", &value);
        out
    }

    /// The run configuration at one grid point.
    pub fn apply(&self, base: &RunConfig, value: f64) -> RunConfig {
        let mut config = base.clone();
        match self.parameter {
            SweepParameter::Alpha => config.generator.emission.alpha = value,
            SweepParameter::KappaPar => config.generator.emission.kappa_par = value,
            SweepParameter::KappaRad => config.generator.emission.kappa_rad = value,
            SweepParameter::EMin => config.generator.emission.e_min = value,
            SweepParameter::SolidAngle => config.cut.solid_angle = value,
            SweepParameter::SmearSigma => config.generator.smear_sigma = value,
        }
        if let Some(n) = self.n_events {
            config.generator.n_events = n;
        }
        config
    }
}
