//! Benchmark report structure and machine-readable emission.
//!
//! Each report carries per-method (unmitigated, LI, NN) mean and standard
//! error for each metric over the test set, plus the improvement ratios.
//! JSON holds the full structure; CSV is one row per method × metric with the
//! fixed column order `n, method, metric, mean, stderr`. Wall-clock timings
//! are deliberately excluded from the report JSON (identical config + seed
//! must produce byte-identical reports) and written to a `*.timings.json`
//! side file instead.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qrem_core::error::{Error, Result};
use qrem_core::metrics::{improvement_ratio, MetricKind};

/// Mean and standard error of one metric over the test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

/// All three metric statistics for one mitigation method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub mse: Stat,
    pub kld: Stat,
    #[serde(rename = "if")]
    pub infidelity: Stat,
}

impl MethodStats {
    pub fn get(&self, kind: MetricKind) -> Stat {
        match kind {
            MetricKind::Mse => self.mse,
            MetricKind::Kld => self.kld,
            MetricKind::Infidelity => self.infidelity,
        }
    }
}

/// The three rows of a report, in presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodTable {
    pub unmitigated: MethodStats,
    pub li: MethodStats,
    pub nn: MethodStats,
}

impl MethodTable {
    pub const METHOD_NAMES: [&'static str; 3] = ["unmitigated", "li", "nn"];

    pub fn by_name(&self, name: &str) -> Option<&MethodStats> {
        match name {
            "unmitigated" => Some(&self.unmitigated),
            "li" => Some(&self.li),
            "nn" => Some(&self.nn),
            _ => None,
        }
    }
}

/// Improvement ratios R_i in percent; `None` marks the "NN exact" sentinel
/// (the NN error was exactly zero, so the ratio is undefined).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRatios {
    pub mse: Option<f64>,
    pub kld: Option<f64>,
    #[serde(rename = "if")]
    pub infidelity: Option<f64>,
}

/// Per-phase wall-clock seconds. Not serialized with the report.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub data_gen: f64,
    pub calibration: f64,
    pub training: f64,
    pub inference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n: usize,
    pub channel: String,
    /// Drift time index, when part of a drift series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_index: Option<i64>,
    pub train_size: usize,
    pub test_size: usize,
    pub methods: MethodTable,
    pub improvement_ratios: ImprovementRatios,
    pub config_fingerprint: String,
    pub train_fingerprint: String,
    #[serde(skip)]
    pub timings: Timings,
}

impl BenchmarkReport {
    /// Recomputes every R_i from the LI/NN means and checks consistency
    /// within `tolerance` (the sentinel must match a zero NN mean).
    pub fn check_ratio_consistency(&self, tolerance: f64) -> Result<()> {
        for kind in MetricKind::ALL {
            let li = self.methods.li.get(kind).mean;
            let nn = self.methods.nn.get(kind).mean;
            let stored = match kind {
                MetricKind::Mse => self.improvement_ratios.mse,
                MetricKind::Kld => self.improvement_ratios.kld,
                MetricKind::Infidelity => self.improvement_ratios.infidelity,
            };
            match (improvement_ratio(li, nn), stored) {
                (Ok(expected), Some(actual)) => {
                    if (expected - actual).abs() > tolerance {
                        return Err(Error::InvalidConfig(format!(
                            "ratio {kind} drifted: stored {actual}, recomputed {expected}"
                        )));
                    }
                }
                (Err(Error::NnExact), None) => {}
                (recomputed, stored) => {
                    return Err(Error::InvalidConfig(format!(
                        "ratio {kind} inconsistent: stored {stored:?}, recomputed {recomputed:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rows in the fixed CSV order: methods unmitigated/li/nn × metrics
    /// mse/kld/if.
    pub fn csv_rows(&self) -> Vec<(usize, &'static str, &'static str, f64, f64)> {
        let mut rows = Vec::with_capacity(9);
        for method in MethodTable::METHOD_NAMES {
            let stats = self.methods.by_name(method).expect("known method");
            for kind in MetricKind::ALL {
                let s = stats.get(kind);
                rows.push((self.n, method, kind.name(), s.mean, s.stderr));
            }
        }
        rows
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_reader<R: std::io::Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(r))?)
    }
}

pub const CSV_HEADER: &str = "n,method,metric,mean,stderr";

fn write_csv_rows<W: Write>(
    w: &mut W,
    rows: &[(usize, &str, &str, f64, f64)],
    with_time: Option<&[Option<i64>]>,
) -> Result<()> {
    match with_time {
        None => writeln!(w, "{CSV_HEADER}")?,
        Some(_) => writeln!(w, "t,{CSV_HEADER}")?,
    }
    for (i, (n, method, metric, mean, stderr)) in rows.iter().enumerate() {
        if let Some(times) = with_time {
            match times[i] {
                Some(t) => write!(w, "{t},")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w, "{n},{method},{metric},{mean},{stderr}")?;
    }
    Ok(())
}

/// Writes `<stem>.json`, `<stem>.csv`, and `<stem>.timings.json` under
/// `out_dir`; returns the paths written.
pub fn emit_report(report: &BenchmarkReport, out_dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join(format!("{stem}.json"));
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let timings_path = out_dir.join(format!("{stem}.timings.json"));

    let mut json = BufWriter::new(File::create(&json_path)?);
    json.write_all(report.to_json_string()?.as_bytes())?;
    json.write_all(b"\n")?;
    json.flush()?;

    let mut csv = BufWriter::new(File::create(&csv_path)?);
    write_csv_rows(&mut csv, &report.csv_rows(), None)?;
    csv.flush()?;

    let mut timings = BufWriter::new(File::create(&timings_path)?);
    serde_json::to_writer_pretty(&mut timings, &report.timings)?;
    timings.write_all(b"\n")?;
    timings.flush()?;

    Ok(vec![json_path, csv_path, timings_path])
}

/// Writes one report per time step plus a combined long-format CSV
/// (`<stem>_series.csv` with a leading `t` column).
pub fn emit_drift_series(
    reports: &[BenchmarkReport],
    out_dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for report in reports {
        let t = report.time_index.unwrap_or_default();
        paths.extend(emit_report(report, out_dir, &format!("{stem}_t{t:03}"))?);
    }
    let combined_path = out_dir.join(format!("{stem}_series.csv"));
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for report in reports {
        for row in report.csv_rows() {
            rows.push(row);
            times.push(report.time_index);
        }
    }
    let mut csv = BufWriter::new(File::create(&combined_path)?);
    write_csv_rows(&mut csv, &rows, Some(&times))?;
    csv.flush()?;
    paths.push(combined_path);
    Ok(paths)
}
