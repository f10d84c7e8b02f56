//! Append-only JSON-lines event log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::{Governance, Scenario};
use crate::agents::{ParseFailure, Phase, Platform};
use crate::fiscal::TaxSchedule;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema_version: u32,
    pub n_workers: usize,
    pub total_steps: u64,
    pub steps_per_year: u64,
    pub thresholds: Vec<f64>,
    pub seed: u64,
    pub scenario: Scenario,
    pub governance: Governance,
    pub convergence_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub tax_year: u64,
    pub rates: Vec<f64>,
    pub labor: Vec<f64>,
    pub pre_tax: Vec<f64>,
    pub post_tax: Vec<f64>,
    pub utilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satisfied: Option<Vec<bool>>,
    pub total_tax: f64,
    pub rebate: f64,
    pub swf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub step: u64,
    pub tax_year: u64,
    pub phase: Phase,
    pub old_schedule: TaxSchedule,
    pub new_schedule: TaxSchedule,
    pub delta: Vec<f64>,
    /// Mean welfare credited to the outgoing schedule.
    pub credited_swf: f64,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub step: u64,
    pub tax_year: u64,
    pub incumbent_id: u32,
    pub platforms: Vec<Platform>,
    /// One ballot per worker, in worker order.
    pub votes: Vec<u32>,
    pub winner_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFailureRecord {
    pub step: u64,
    #[serde(flatten)]
    pub failure: ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event {
    Header(LogHeader),
    Election(ElectionRecord),
    Policy(PolicyRecord),
    ParseFailure(ParseFailureRecord),
    Step(StepRecord),
}

impl Event {
    pub fn step(&self) -> Option<u64> {
        match self {
            Event::Header(_) => None,
            Event::Election(r) => Some(r.step),
            Event::Policy(r) => Some(r.step),
            Event::ParseFailure(r) => Some(r.step),
            Event::Step(r) => Some(r.step),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message} (last valid record on line {last_valid})")]
    Corrupt { line: usize, last_valid: usize, message: String },
    #[error("log does not start with a header record")]
    MissingHeader,
    #[error("unsupported schema version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    records: Vec<Event>,
}

impl EventLog {
    pub fn new(header: LogHeader) -> Self {
        Self { records: vec![Event::Header(header)] }
    }

    pub fn push(&mut self, event: Event) {
        self.records.push(event);
    }

    pub fn records(&self) -> &[Event] {
        &self.records
    }

    pub fn header(&self) -> Option<&LogHeader> {
        match self.records.first() {
            Some(Event::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|e| match e {
            Event::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn elections(&self) -> impl Iterator<Item = &ElectionRecord> {
        self.records.iter().filter_map(|e| match e {
            Event::Election(r) => Some(r),
            _ => None,
        })
    }

    pub fn policies(&self) -> impl Iterator<Item = &PolicyRecord> {
        self.records.iter().filter_map(|e| match e {
            Event::Policy(r) => Some(r),
            _ => None,
        })
    }

    pub fn parse_failures(&self) -> impl Iterator<Item = &ParseFailureRecord> {
        self.records.iter().filter_map(|e| match e {
            Event::ParseFailure(r) => Some(r),
            _ => None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parse a log. Blank input gives an empty log; anything else must open
    /// with a header of a known version.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut records = Vec::new();
        let mut last_valid = 0;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Event = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                line: lineno,
                last_valid,
                message: e.to_string(),
            })?;
            if records.is_empty() {
                match &rec {
                    Event::Header(h) if h.schema_version != SCHEMA_VERSION => {
                        return Err(LogError::Version(h.schema_version))
                    }
                    Event::Header(_) => {}
                    _ => return Err(LogError::MissingHeader),
                }
            }
            records.push(rec);
            last_valid = lineno;
        }
        Ok(Self { records })
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}
