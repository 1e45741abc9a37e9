//! Batch runner behind the `run`, `analyze` and `sweep` commands.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::analysis::{PairTally, ViolationScan};
use crate::config::{ConfigError, RunConfig, SweepSpec};
use crate::event::{generate_batch, Channel, Event, GenerationError};
use crate::eventlog::{EventLogError, EventLogReader, EventLogWriter};
use crate::summary::{ChshRow, CorrelationRow, Provenance, RunStats, Summary, ViolationRow};

pub const TOOL: &str = "epr-sim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Present in the output directory while a run is in progress.
pub const INCOMPLETE_MARKER: &str = "RUN_INCOMPLETE";

pub const SWEEP_TABLE: &str = "sweep.tsv";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    EventLog {
        path: PathBuf,
        source: EventLogError,
    },
}

impl RunError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
        move |source| RunError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(ConfigError::Io { .. }) => "io",
            RunError::Config(_) => "config",
            RunError::Generation(_) => "generation",
            RunError::Io { .. } | RunError::EventLog { .. } => "io",
        }
    }

    /// 2 for configuration problems, 3 for generation failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Io { .. }) => 4,
            RunError::Config(_) => 2,
            RunError::Generation(_) => 3,
            RunError::Io { .. } | RunError::EventLog { .. } => 4,
        }
    }

    /// Machine-readable record in the same dotted key-value format as configs.
    pub fn to_record(&self) -> String {
        let quote = |s: &str| toml::Value::String(s.to_owned()).to_string();
        let mut out = format!(
            "error.kind = {}\nerror.exit_code = {}\n",
            quote(self.kind()),
            self.exit_code()
        );
        if let RunError::Config(e) = self {
            if let Some(field) = e.field() {
                out.push_str(&format!("error.field = {}\n", quote(field)));
            }
        }
        out.push_str(&format!("error.message = {}\n", quote(&self.to_string())));
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: usize,
}

impl RunOptions {
    fn apply(&self, config: &mut RunConfig) -> PathBuf {
        if let Some(seed) = self.seed {
            config.generator.seed = seed;
        }
        self.out_dir
            .clone()
            .unwrap_or_else(|| config.output.resolve_dir())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub events_path: Option<PathBuf>,
    pub summary_path: PathBuf,
}

/// Configuration text recorded in output headers. Output locations and log
/// verbosity do not influence results and are left out, so reruns into other
/// directories produce identical files.
pub fn provenance_config(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.output = Default::default();
    c.log_level = RunConfig::default().log_level;
    c.to_text()
}

fn provenance_header(config: &RunConfig) -> String {
    format!(
        "provenance.tool = \"{TOOL}\"\nprovenance.version = \"{VERSION}\"\n{}",
        provenance_config(config)
    )
}

/// Rebuilds the run configuration from an event log's provenance lines.
pub fn config_from_provenance(lines: &[String]) -> Result<RunConfig, ConfigError> {
    let text: String = lines
        .iter()
        .filter(|l| !l.starts_with("provenance.") && l.contains(" = "))
        .map(|l| format!("{l}\n"))
        .collect();
    RunConfig::parse(&text)
}

/// Streaming accumulation of everything a summary reports.
#[derive(Debug, Clone)]
pub struct RunAnalyzer {
    config: RunConfig,
    tally: PairTally,
    scan: ViolationScan,
    n_events: u64,
    n_accepted: u64,
    // [k = 0, k >= 1] x [seen, accepted]
    by_content: [[u64; 2]; 2],
    n_parallel: [u64; 2],
}

impl RunAnalyzer {
    pub fn new(config: &RunConfig) -> Self {
        RunAnalyzer {
            config: config.clone(),
            tally: PairTally::new(),
            scan: ViolationScan::new(),
            n_events: 0,
            n_accepted: 0,
            by_content: [[0; 2]; 2],
            n_parallel: [0; 2],
        }
    }

    pub fn push(&mut self, event: &Event) {
        let accepted = self.config.cut.accepts(event);
        let row = usize::from(event.k >= 1);
        let parallel = event.channel == Channel::RadiativeParallel;
        self.n_events += 1;
        self.by_content[row][0] += 1;
        self.n_parallel[0] += u64::from(parallel);
        if !accepted {
            return;
        }
        self.n_accepted += 1;
        self.by_content[row][1] += 1;
        self.n_parallel[1] += u64::from(parallel);
        self.tally.push(event);
        if self.config.analysis.violations {
            self.scan.push(event);
        }
    }

    pub fn finish(&self, provenance: Provenance) -> Summary {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let acceptance = |c: [u64; 2]| (c[0] > 0).then(|| ratio(c[1], c[0]));
        let run = RunStats {
            n_events: self.n_events,
            n_accepted: self.n_accepted,
            accepted_fraction: ratio(self.n_accepted, self.n_events),
            truth_radiated_fraction: ratio(self.by_content[1][0], self.n_events),
            truth_radiated_fraction_accepted: ratio(self.by_content[1][1], self.n_accepted),
            truth_parallel_fraction: ratio(self.n_parallel[0], self.n_events),
            truth_parallel_fraction_accepted: ratio(self.n_parallel[1], self.n_accepted),
            acceptance_bare: acceptance(self.by_content[0]),
            acceptance_radiative: acceptance(self.by_content[1]),
        };
        let mut errors = Vec::new();
        let mut correlations = Vec::new();
        for (a, b) in &self.config.analysis.correlations {
            match self.tally.estimate(a, b) {
                Ok(est) => correlations.push(CorrelationRow::from_estimate(&est)),
                Err(e) => errors.push(format!("correlation: {e}")),
            }
        }
        let mut chsh = Vec::new();
        for settings in &self.config.analysis.chsh {
            let [a, a2, b, b2] = settings;
            match self.tally.chsh(a, a2, b, b2) {
                Ok(est) => chsh.push(ChshRow::from_estimate(settings, &est)),
                Err(e) => errors.push(format!("chsh: {e}")),
            }
        }
        let violations = self
            .config
            .analysis
            .violations
            .then(|| ViolationRow::from(self.scan.report()));
        Summary {
            errors,
            provenance,
            run,
            correlations,
            chsh,
            violations,
        }
    }
}

fn provenance(config: &RunConfig, source_events: Option<&Path>) -> Provenance {
    Provenance {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: config.generator.seed,
        config: provenance_config(config),
        source_events: source_events.map(|p| p.display().to_string()),
    }
}

fn write_summary(path: &Path, summary: &Summary) -> Result<(), RunError> {
    fs::write(path, summary.to_text()).map_err(RunError::io(path))
}

/// Generates, logs and analyzes one run.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunOutcome, RunError> {
    let mut config = config.clone();
    let out_dir = options.apply(&mut config);
    config.validate()?;
    fs::create_dir_all(&out_dir).map_err(RunError::io(&out_dir))?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, provenance_header(&config)).map_err(RunError::io(&marker))?;

    let events_path = out_dir.join(&config.output.events);
    let file = File::create(&events_path).map_err(RunError::io(&events_path))?;
    let mut writer = EventLogWriter::new(BufWriter::new(file), &provenance_header(&config))
        .map_err(RunError::io(&events_path))?;
    let mut analyzer = RunAnalyzer::new(&config);
    info!(
        "generating {} events with seed {}",
        config.generator.n_events, config.generator.seed
    );
    for event in generate_batch(&config.generator)?.with_workers(options.workers.max(1)) {
        let event = event?;
        writer
            .write_event(&event)
            .map_err(RunError::io(&events_path))?;
        analyzer.push(&event);
    }
    writer.finish().map_err(RunError::io(&events_path))?;

    let summary = analyzer.finish(provenance(&config, None));
    for e in &summary.errors {
        warn!("{e}");
    }
    let summary_path = out_dir.join(&config.output.summary);
    write_summary(&summary_path, &summary)?;
    fs::remove_file(&marker).map_err(RunError::io(&marker))?;
    Ok(RunOutcome {
        summary,
        events_path: Some(events_path),
        summary_path,
    })
}

/// Generates and analyzes without writing an event log.
pub fn simulate(config: &RunConfig, workers: usize) -> Result<Summary, RunError> {
    config.validate()?;
    let mut analyzer = RunAnalyzer::new(config);
    for event in generate_batch(&config.generator)?.with_workers(workers.max(1)) {
        analyzer.push(&event?);
    }
    Ok(analyzer.finish(provenance(config, None)))
}

/// Re-analyzes an existing event log with the cut and estimators of `config`.
pub fn analyze(
    config: &RunConfig,
    events_path: &Path,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let mut config = config.clone();
    let out_dir = options.apply(&mut config);
    config.validate()?;
    let log_err = |source| RunError::EventLog {
        path: events_path.to_owned(),
        source,
    };
    let file = File::open(events_path).map_err(RunError::io(events_path))?;
    let mut reader = EventLogReader::new(BufReader::new(file)).map_err(log_err)?;
    if let Ok(original) = config_from_provenance(reader.provenance()) {
        config.generator = original.generator;
    }
    let mut analyzer = RunAnalyzer::new(&config);
    for event in reader.by_ref() {
        analyzer.push(&event.map_err(log_err)?);
    }
    let mut summary = analyzer.finish(provenance(&config, Some(events_path)));
    if !reader.is_complete() {
        warn!("{} has no completion marker", events_path.display());
        summary
            .errors
            .push("event log is incomplete (no completion marker)".into());
    }
    fs::create_dir_all(&out_dir).map_err(RunError::io(&out_dir))?;
    let summary_path = out_dir.join(&config.output.summary);
    write_summary(&summary_path, &summary)?;
    Ok(RunOutcome {
        summary,
        events_path: None,
        summary_path,
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub result: Result<Summary, String>,
}

impl SweepRow {
    fn columns(&self, index: usize) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        match &self.result {
            Ok(s) => {
                let corr = s.correlations.first();
                let chsh = s.chsh.first();
                let violation = s.violations.as_ref().map(|v| v.fraction);
                format!(
                    "{index}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}\t",
                    self.value,
                    f(corr.map(|c| c.value)),
                    f(corr.map(|c| c.stderr)),
                    f(chsh.map(|c| c.s)),
                    f(chsh.map(|c| c.stderr)),
                    f(violation),
                    s.run.accepted_fraction,
                    s.run.truth_radiated_fraction,
                )
            }
            Err(e) => format!(
                "{index}\t{:?}\t\t\t\t\t\t\t\t{}",
                self.value,
                e.replace(['\t', '\n'], " ")
            ),
        }
    }
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "index",
    "value",
    "E",
    "E_stderr",
    "S",
    "S_stderr",
    "violation_fraction",
    "accepted_fraction",
    "radiated_fraction",
    "error",
];

/// Runs every grid point in order. Failing points are recorded in their row
/// and the sweep carries on.
pub fn sweep(
    config: &RunConfig,
    spec: &SweepSpec,
    options: &RunOptions,
) -> Result<Vec<SweepRow>, RunError> {
    spec.validate()?;
    let mut base = config.clone();
    let out_dir = options.apply(&mut base);
    fs::create_dir_all(&out_dir).map_err(RunError::io(&out_dir))?;
    let mut rows = Vec::with_capacity(spec.grid.len());
    for (i, &value) in spec.grid.iter().enumerate() {
        let point = spec.apply(&base, value);
        info!("sweep point {i}: {} = {value}", spec.parameter.name());
        let result = simulate(&point, options.workers).map_err(|e| e.to_string());
        match &result {
            Ok(summary) => {
                let path = out_dir.join(format!("point_{i:03}.txt"));
                write_summary(&path, summary)?;
            }
            Err(e) => warn!("sweep point {i} failed: {e}"),
        }
        rows.push(SweepRow { value, result });
    }
    let table_path = out_dir.join(SWEEP_TABLE);
    let mut table = BufWriter::new(File::create(&table_path).map_err(RunError::io(&table_path))?);
    let write_table = |table: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(table, "# provenance.tool = \"{TOOL}\"")?;
        writeln!(table, "# provenance.version = \"{VERSION}\"")?;
        for line in spec
            .to_text()
            .lines()
            .chain(provenance_config(&base).lines())
        {
            writeln!(table, "# {line}")?;
        }
        writeln!(table, "# parameter = {}", spec.parameter.name())?;
        writeln!(table, "{}", SWEEP_COLUMNS.join("\t"))?;
        for (i, row) in rows.iter().enumerate() {
            writeln!(table, "{}", row.columns(i))?;
        }
        table.flush()
    };
    write_table(&mut table).map_err(RunError::io(&table_path))?;
    Ok(rows)
}
