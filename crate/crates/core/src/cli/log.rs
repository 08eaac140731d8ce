//! JSON-lines training log and its CSV export.
//!
//! The first line holds the fully resolved configuration; every further line
//! is one [`IterationRecord`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub eval_return: f64,
    pub best_so_far: f64,
    pub mean_pop_fitness: f64,
    pub wall_clock_s: f64,
    pub bytes_sent: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: RunConfig,
}

pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path, config: &RunConfig) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let header = serde_json::to_string(&Header {
            config: config.clone(),
        })
        .map_err(|e| Error::Config(e.to_string()))?;
        writeln!(out, "{header}")?;
        out.flush()?;
        Ok(LogWriter { out })
    }

    pub fn append(&mut self, rec: &IterationRecord) -> Result<()> {
        let line = serde_json::to_string(rec).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a log back: configuration header plus iteration records.
pub fn read_log(path: &Path) -> Result<(RunConfig, Vec<IterationRecord>)> {
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))??;
    let header: Header =
        serde_json::from_str(&first).map_err(|e| Error::Config(format!("bad log header: {e}")))?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| Error::Config(format!("bad log line: {e}")))?,
        );
    }
    Ok((header.config, records))
}

/// CSV with columns `iteration,best_so_far,eval_return,wall_clock_s`.
pub fn export_csv(records: &[IterationRecord]) -> String {
    let mut s = String::from("iteration,best_so_far,eval_return,wall_clock_s\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.best_so_far, r.eval_return, r.wall_clock_s
        ));
    }
    s
}
