//! Tab-separated event log.
//!
//! Layout:
//!
//! * provenance lines starting with `# ` (tool, version, seed and the full
//!   configuration text, enough to regenerate the file bit for bit);
//! * one column-header row with names and units;
//! * one row per event in index order;
//! * a closing `# complete events=<n>` line, absent if the run died.
//!
//! Columns: `index, k, channel, axisA(x,y,z), axisB(x,y,z), sA, sB,
//! dirA(x,y,z), dirB(x,y,z), E_A, jz_fermions, jz_photons, pt_x, pt_y`, then
//! `k` photon groups `(energy, helicity, jz, cos_theta, phi)`. Floats are
//! written in their shortest round-trip form.

use std::io::{self, BufRead, Write};

use crate::emission::PhotonRecord;
use crate::event::{Channel, Event};
use crate::spin::{Direction, SpinOutcome};

pub const HEADER_COLUMNS: [&str; 23] = [
    "index",
    "k",
    "channel",
    "axisA_x",
    "axisA_y",
    "axisA_z",
    "axisB_x",
    "axisB_y",
    "axisB_z",
    "sA[hbar/2]",
    "sB[hbar/2]",
    "dirA_x",
    "dirA_y",
    "dirA_z",
    "dirB_x",
    "dirB_y",
    "dirB_z",
    "E_A[E]",
    "jz_fermions[hbar/2]",
    "jz_photons[hbar]",
    "pt_x[E]",
    "pt_y[E]",
    "photons[energy[E],helicity[hbar],jz[hbar],cos_theta,phi[rad]]...",
];

const FIXED_COLUMNS: usize = HEADER_COLUMNS.len() - 1;
const PHOTON_COLUMNS: usize = 5;
const COMPLETE_PREFIX: &str = "# complete events=";

#[derive(Debug, thiserror::Error)]
pub enum EventLogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub struct EventLogWriter<W: Write> {
    out: W,
    written: u64,
}

impl<W: Write> EventLogWriter<W> {
    /// Writes the provenance block (each line prefixed with `# `) and the
    /// column header.
    pub fn new(mut out: W, provenance: &str) -> io::Result<Self> {
        for line in provenance.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{}", HEADER_COLUMNS.join("\t"))?;
        Ok(EventLogWriter { out, written: 0 })
    }

    pub fn write_event(&mut self, e: &Event) -> io::Result<()> {
        let mut row = String::with_capacity(256 + 64 * e.photons.len());
        row.push_str(&format!("{}\t{}\t{}", e.index, e.k, e.channel));
        for d in [e.axis_a, e.axis_b] {
            push_direction(&mut row, &d);
        }
        row.push_str(&format!(
            "\t{}\t{}",
            e.outcome_a.value(),
            e.outcome_b.value()
        ));
        for d in [e.dir_a, e.dir_b] {
            push_direction(&mut row, &d);
        }
        row.push_str(&format!(
            "\t{:?}\t{}\t{}\t{:?}\t{:?}",
            e.e_a, e.jz_fermions, e.jz_photons, e.pt_residual[0], e.pt_residual[1]
        ));
        for p in &e.photons {
            row.push_str(&format!(
                "\t{:?}\t{}\t{}\t{:?}\t{:?}",
                p.energy,
                p.helicity,
                p.lab_jz,
                p.direction.z(),
                p.direction.azimuth()
            ));
        }
        row.push('\n');
        self.out.write_all(row.as_bytes())?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    /// Appends the completion marker and flushes.
    pub fn finish(mut self) -> io::Result<W> {
        writeln!(self.out, "{COMPLETE_PREFIX}{}", self.written)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

fn push_direction(row: &mut String, d: &Direction) {
    row.push_str(&format!("\t{:?}\t{:?}\t{:?}", d.x(), d.y(), d.z()));
}

/// Streaming reader; yields events in file order.
pub struct EventLogReader<R: BufRead> {
    lines: io::Lines<R>,
    line_no: usize,
    provenance: Vec<String>,
    pending: Option<String>,
    complete: Option<u64>,
    read: u64,
}

impl<R: BufRead> EventLogReader<R> {
    /// Reads the provenance block and checks the column header.
    pub fn new(input: R) -> Result<Self, EventLogError> {
        let mut reader = EventLogReader {
            lines: input.lines(),
            line_no: 0,
            provenance: Vec::new(),
            pending: None,
            complete: None,
            read: 0,
        };
        loop {
            let Some(line) = reader.next_line()? else {
                return Err(reader.malformed("missing column header"));
            };
            if let Some(rest) = line.strip_prefix('#') {
                reader
                    .provenance
                    .push(rest.strip_prefix(' ').unwrap_or(rest).to_owned());
                continue;
            }
            if line.split('\t').next() != Some(HEADER_COLUMNS[0]) {
                return Err(reader.malformed("expected column header"));
            }
            reader.pending = None;
            break;
        }
        Ok(reader)
    }

    fn next_line(&mut self) -> Result<Option<String>, EventLogError> {
        match self.lines.next() {
            Some(line) => {
                self.line_no += 1;
                Ok(Some(line?))
            }
            None => Ok(None),
        }
    }

    fn malformed(&self, reason: impl Into<String>) -> EventLogError {
        EventLogError::Malformed {
            line: self.line_no,
            reason: reason.into(),
        }
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    /// Whether the completion marker was seen with a matching event count.
    /// Meaningful once the reader is exhausted.
    pub fn is_complete(&self) -> bool {
        self.complete == Some(self.read)
    }

    fn parse_row(&self, line: &str) -> Result<Event, EventLogError> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < FIXED_COLUMNS {
            return Err(self.malformed(format!("expected at least {FIXED_COLUMNS} columns")));
        }
        let mut cursor = Fields {
            fields: &fields,
            pos: 0,
            line: self.line_no,
        };
        let index = cursor.parse::<u64>("index")?;
        let k = cursor.parse::<usize>("k")?;
        let channel = cursor
            .take("channel")?
            .parse::<Channel>()
            .map_err(|reason| self.malformed(reason))?;
        let axis_a = cursor.direction("axisA")?;
        let axis_b = cursor.direction("axisB")?;
        let outcome_a = cursor.outcome("sA")?;
        let outcome_b = cursor.outcome("sB")?;
        let dir_a = cursor.direction("dirA")?;
        let dir_b = cursor.direction("dirB")?;
        let e_a = cursor.parse::<f64>("E_A")?;
        let jz_fermions = cursor.parse::<i32>("jz_fermions")?;
        let jz_photons = cursor.parse::<i32>("jz_photons")?;
        let pt_x = cursor.parse::<f64>("pt_x")?;
        let pt_y = cursor.parse::<f64>("pt_y")?;
        if fields.len() != FIXED_COLUMNS + PHOTON_COLUMNS * k {
            return Err(self.malformed(format!(
                "k = {k} but {} photon columns",
                fields.len() - FIXED_COLUMNS
            )));
        }
        let mut photons = Vec::with_capacity(k);
        for _ in 0..k {
            let energy = cursor.parse::<f64>("photon energy")?;
            let helicity = cursor.parse::<i32>("photon helicity")?;
            let lab_jz = cursor.parse::<i32>("photon jz")?;
            let cos_theta = cursor.parse::<f64>("photon cos_theta")?;
            let phi = cursor.parse::<f64>("photon phi")?;
            if !(-1.0..=1.0).contains(&cos_theta) {
                return Err(self.malformed("photon cos_theta outside [-1, 1]"));
            }
            photons.push(PhotonRecord {
                energy,
                direction: Direction::from_angles(cos_theta.acos(), phi),
                helicity,
                lab_jz,
            });
        }
        Ok(Event {
            index,
            k,
            channel,
            axis_a,
            axis_b,
            outcome_a,
            outcome_b,
            dir_a,
            dir_b,
            e_a,
            photons,
            jz_fermions,
            jz_photons,
            jz_source: 0,
            pt_residual: [pt_x, pt_y],
        })
    }
}

struct Fields<'a> {
    fields: &'a [&'a str],
    pos: usize,
    line: usize,
}

impl<'a> Fields<'a> {
    fn take(&mut self, name: &str) -> Result<&'a str, EventLogError> {
        let v = self
            .fields
            .get(self.pos)
            .ok_or_else(|| EventLogError::Malformed {
                line: self.line,
                reason: format!("missing {name}"),
            })?;
        self.pos += 1;
        Ok(v)
    }

    fn parse<T: std::str::FromStr>(&mut self, name: &str) -> Result<T, EventLogError> {
        let line = self.line;
        let raw = self.take(name)?;
        raw.parse().map_err(|_| EventLogError::Malformed {
            line,
            reason: format!("bad {name} {raw:?}"),
        })
    }

    fn direction(&mut self, name: &str) -> Result<Direction, EventLogError> {
        let x = self.parse::<f64>(name)?;
        let y = self.parse::<f64>(name)?;
        let z = self.parse::<f64>(name)?;
        Direction::new(x, y, z).map_err(|e| EventLogError::Malformed {
            line: self.line,
            reason: format!("{name}: {e}"),
        })
    }

    fn outcome(&mut self, name: &str) -> Result<SpinOutcome, EventLogError> {
        let v = self.parse::<i32>(name)?;
        SpinOutcome::from_value(v).ok_or_else(|| EventLogError::Malformed {
            line: self.line,
            reason: format!("{name} must be +1 or -1, got {v}"),
        })
    }
}

impl<R: BufRead> Iterator for EventLogReader<R> {
    type Item = Result<Event, EventLogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.next_line() {
                Ok(Some(line)) => line,
                Ok(None) => return None,
                Err(e) => return Some(Err(e)),
            };
            if let Some(count) = line.strip_prefix(COMPLETE_PREFIX) {
                self.complete = count.trim().parse().ok();
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let parsed = self.parse_row(&line);
            if parsed.is_ok() {
                self.read += 1;
            }
            return Some(parsed);
        }
    }
}
