//! JSON-lines reports. Each line is one self-contained record.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::explore::Status;
use crate::monitor::Violation;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Record {
    /// One random-mode run.
    Run {
        run: usize,
        status: Status,
        schedule: String,
        violations: Vec<Violation>,
        workload: String,
    },
    /// A violating schedule found by exhaustive search.
    Fail {
        schedule: String,
        violation: Violation,
        workload: String,
        /// Command line that replays this record.
        repro: String,
    },
    Summary {
        structure: String,
        mode: String,
        schedules: u64,
        states: usize,
        bound_exhausted: usize,
        violations: usize,
        truncated: bool,
        passed: bool,
        elapsed_ms: u64,
    },
}

impl Record {
    /// Schedule and workload digest, for records that carry a schedule.
    pub fn schedule(&self) -> Option<(&str, &str)> {
        match self {
            Record::Run { schedule, workload, .. } | Record::Fail { schedule, workload, .. } => {
                Some((schedule, workload))
            }
            Record::Summary { .. } => None,
        }
    }

    pub fn violations(&self) -> Vec<&Violation> {
        match self {
            Record::Run { violations, .. } => violations.iter().collect(),
            Record::Fail { violation, .. } => vec![violation],
            Record::Summary { .. } => Vec::new(),
        }
    }
}

pub fn write_record(out: &mut dyn Write, r: &Record) -> io::Result<()> {
    serde_json::to_writer(&mut *out, r)?;
    out.write_all(b"\n")
}

pub fn read_records(input: impl BufRead) -> Result<Vec<Record>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::Category;

    #[test]
    fn records_round_trip_line_by_line() {
        let recs = vec![
            Record::Fail {
                schedule: "0 1.1".into(),
                violation: Violation::new(Category::Spec, "linearizations-satisfy-spec", "x"),
                workload: "abc".into(),
                repro: "polarize replay".into(),
            },
            Record::Summary {
                structure: "tsqueue".into(),
                mode: "exhaustive".into(),
                schedules: 12,
                states: 5,
                bound_exhausted: 0,
                violations: 1,
                truncated: true,
                passed: false,
                elapsed_ms: 3,
            },
        ];
        let mut buf = Vec::new();
        for r in &recs {
            write_record(&mut buf, r).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
        assert_eq!(read_records(text.as_bytes()).unwrap(), recs);
    }
}
