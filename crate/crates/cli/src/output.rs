//! Artifacts: report CSV and JSON, auxiliary tables, form snapshots and the resolved config.
//! Every text file starts with the config hash and the code version; binary snapshots carry
//! the hash in their file name.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use villain_core::observables::{MeasureReport, Verdict};
use villain_core::snapshot::write_payload;

use crate::config::RunConfig;
use crate::experiments::Outcome;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

fn stamp(cfg: &RunConfig) -> String {
    format!("villain {VERSION} config-sha256 {}", cfg.hash())
}

pub fn write_resolved_config(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(RESOLVED_CONFIG);
    fs::write(&path, format!("# {}\n{}", stamp(cfg), cfg.resolved_toml()))?;
    Ok(path)
}

/// Overall verdict: any failure fails, otherwise anything undecided is inconclusive.
pub fn overall(reports: &[MeasureReport]) -> Verdict {
    if reports.is_empty() {
        return Verdict::Inconclusive;
    }
    reports.iter().fold(Verdict::Pass, |v, r| v.combine(r.verdict()))
}

#[derive(Serialize)]
struct JsonReport<'a> {
    version: &'a str,
    config_hash: String,
    experiment: &'a str,
    verdict: Verdict,
    config: &'a RunConfig,
    reports: &'a [MeasureReport],
}

fn csv_writer(path: &Path, cfg: &RunConfig) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?);
    writeln!(file, "# {}", stamp(cfg))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_outcome(cfg: &RunConfig, dir: &Path, outcome: &Outcome) -> Result<Verdict> {
    fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("report.csv"), cfg)?;
    w.write_record(["name", "estimate", "se", "target", "margin", "verdict"])?;
    for r in &outcome.reports {
        for row in r.csv_rows() {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    for t in &outcome.tables {
        let mut w = csv_writer(&dir.join(format!("{}.csv", t.name)), cfg)?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    let verdict = overall(&outcome.reports);
    let json = JsonReport {
        version: VERSION,
        config_hash: cfg.hash(),
        experiment: cfg.experiment.name(),
        verdict,
        config: cfg,
        reports: &outcome.reports,
    };
    let mut f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut f, &json)?;
    writeln!(f)?;
    f.flush()?;
    if cfg.output.snapshots {
        let tag = &cfg.hash()[..12];
        for (name, payload) in &outcome.snapshots {
            let mut f = BufWriter::new(File::create(dir.join(format!("{tag}-{name}")))?);
            write_payload(&mut f, payload)?;
            f.flush()?;
        }
    }
    Ok(verdict)
}

/// Short human summary for the terminal.
pub fn summary(outcome: &Outcome) -> String {
    let mut s = String::new();
    for r in &outcome.reports {
        s.push_str(&format!("{:<40} {:>14.6e} ± {:<10.2e} {}\n", r.name, r.estimate.mean, r.estimate.se, r.verdict().as_str()));
        for c in &r.comparisons {
            if c.verdict != Verdict::Pass {
                s.push_str(&format!("    {:<36} {:>14.6e} vs {:<14.6e} {}\n", c.name, c.estimate, c.target, c.verdict.as_str()));
            }
        }
    }
    s
}
