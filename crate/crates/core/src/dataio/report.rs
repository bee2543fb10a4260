//! Evaluation reports.
//!
//! CSV files carry values rounded to four decimals; `report.json` keeps full
//! precision. Undefined HD95 values are written as `undefined`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_std, GedReport, MeanStd, Sweep, SweepSummary};

use super::{atomic_write, write_json};

pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub id: String,
    pub sweep: Sweep,
    pub ged: GedReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GedSummary {
    pub d2_ged: MeanStd,
    pub expected_distance: MeanStd,
    pub diversity: MeanStd,
    pub expected_dsc: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: Option<u64>,
    pub checkpoint: Option<String>,
    pub thresholds: Vec<f64>,
    pub cases: Vec<CaseEvaluation>,
    /// Case-averaged metrics per threshold, summarised across thresholds.
    pub summary: SweepSummary,
    pub ged_summary: GedSummary,
}

impl EvalReport {
    pub fn new(seed: Option<u64>, checkpoint: Option<String>, thresholds: Vec<f64>, cases: Vec<CaseEvaluation>) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::InvalidArgument("report needs at least one case".into()));
        }
        let sweeps: Vec<&Sweep> = cases.iter().map(|c| &c.sweep).collect();
        let summary = aggregate_sweeps(&sweeps)?;
        let col = |f: fn(&GedReport) -> f64| mean_std(&cases.iter().map(|c| f(&c.ged)).collect::<Vec<_>>()).expect("non-empty");
        let ged_summary = GedSummary {
            d2_ged: col(|g| g.d2_ged),
            expected_distance: col(|g| g.expected_distance),
            diversity: col(|g| g.diversity),
            expected_dsc: col(|g| g.expected_dsc),
        };
        Ok(Self { seed, checkpoint, thresholds, cases, summary, ged_summary })
    }
}

/// Average each metric over cases at every threshold, then take mean and
/// population std over thresholds. HD95 averages only defined entries;
/// `hd95_skipped` counts every undefined (case, threshold) entry.
pub fn aggregate_sweeps(sweeps: &[&Sweep]) -> Result<SweepSummary> {
    let first = sweeps.first().ok_or_else(|| Error::InvalidArgument("no sweeps to aggregate".into()))?;
    let n_tau = first.rows.len();
    if sweeps.iter().any(|s| s.rows.len() != n_tau) {
        return Err(Error::ShapeMismatch("sweeps use different threshold lists".into()));
    }
    let per_tau = |f: fn(&crate::metrics::MetricRow) -> f64| -> Vec<f64> {
        (0..n_tau).map(|t| sweeps.iter().map(|s| f(&s.rows[t])).sum::<f64>() / sweeps.len() as f64).collect()
    };
    let mut skipped = 0;
    let mut hd = Vec::with_capacity(n_tau);
    for t in 0..n_tau {
        let defined: Vec<f64> = sweeps.iter().filter_map(|s| s.rows[t].hd95).collect();
        skipped += sweeps.len() - defined.len();
        if !defined.is_empty() {
            hd.push(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    let ms = |v: Vec<f64>| mean_std(&v).ok_or_else(|| Error::InvalidArgument("empty threshold list".into()));
    Ok(SweepSummary {
        dsc: ms(per_tau(|r| r.dsc))?,
        iou: ms(per_tau(|r| r.iou))?,
        precision: ms(per_tau(|r| r.precision))?,
        recall: ms(per_tau(|r| r.recall))?,
        hd95: mean_std(&hd),
        hd95_skipped: skipped,
    })
}

pub fn format4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), format4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub sweep_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub ged_csv: PathBuf,
    pub json: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCsvRow {
    pub case: String,
    pub threshold: f64,
    pub dsc: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub hd95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GedCsvRow {
    pub case: String,
    pub d2_ged: f64,
    pub expected_distance: f64,
    pub diversity: f64,
    pub expected_dsc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skipped_hd95: usize,
}

fn csv_bytes(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let wrap = |e: csv::Error| Error::Csv { path: path.into(), source: e };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))
}

/// Write `sweep.csv`, `summary.csv`, `ged.csv` and `report.json` into `out_dir`.
pub fn write_report(out_dir: &Path, report: &EvalReport) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = ReportFiles {
        sweep_csv: out_dir.join("sweep.csv"),
        summary_csv: out_dir.join("summary.csv"),
        ged_csv: out_dir.join("ged.csv"),
        json: out_dir.join("report.json"),
    };

    let sweep_rows = report.cases.iter().flat_map(|c| {
        c.sweep.rows.iter().map(move |r| {
            vec![
                c.id.clone(),
                format4(r.threshold),
                format4(r.dsc),
                format4(r.iou),
                format4(r.precision),
                format4(r.recall),
                opt4(r.hd95),
            ]
        })
    });
    let bytes = csv_bytes(&files.sweep_csv, &["case", "threshold", "dsc", "iou", "precision", "recall", "hd95"], sweep_rows)?;
    atomic_write(&files.sweep_csv, &bytes)?;

    let s = &report.summary;
    let row = |name: &str, m: Option<MeanStd>, skipped: usize| {
        vec![name.to_string(), opt4(m.map(|m| m.mean)), opt4(m.map(|m| m.std)), skipped.to_string()]
    };
    let summary_rows = vec![
        row("dsc", Some(s.dsc), 0),
        row("iou", Some(s.iou), 0),
        row("precision", Some(s.precision), 0),
        row("recall", Some(s.recall), 0),
        row("hd95", s.hd95, s.hd95_skipped),
    ];
    let bytes = csv_bytes(&files.summary_csv, &["metric", "mean", "std", "skipped_hd95"], summary_rows)?;
    atomic_write(&files.summary_csv, &bytes)?;

    let ged_rows = report.cases.iter().map(|c| {
        vec![
            c.id.clone(),
            format4(c.ged.d2_ged),
            format4(c.ged.expected_distance),
            format4(c.ged.diversity),
            format4(c.ged.expected_dsc),
        ]
    });
    let bytes = csv_bytes(&files.ged_csv, &["case", "d2_ged", "expected_distance", "diversity", "expected_dsc"], ged_rows)?;
    atomic_write(&files.ged_csv, &bytes)?;

    write_json(&files.json, report)?;
    Ok(files)
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Csv { path: path.into(), source: e })?;
    r.records().collect::<std::result::Result<_, _>>().map_err(|e| Error::Csv { path: path.into(), source: e })
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(path, format!("bad field {i} in record {:?}", rec)))
}

fn opt_field(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<Option<f64>> {
    if rec.get(i) == Some(UNDEFINED) {
        Ok(None)
    } else {
        field(path, rec, i).map(Some)
    }
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepCsvRow>> {
    read_records(path)?
        .iter()
        .map(|r| {
            Ok(SweepCsvRow {
                case: field(path, r, 0)?,
                threshold: field(path, r, 1)?,
                dsc: field(path, r, 2)?,
                iou: field(path, r, 3)?,
                precision: field(path, r, 4)?,
                recall: field(path, r, 5)?,
                hd95: opt_field(path, r, 6)?,
            })
        })
        .collect()
}

pub fn read_ged_csv(path: &Path) -> Result<Vec<GedCsvRow>> {
    read_records(path)?
        .iter()
        .map(|r| {
            Ok(GedCsvRow {
                case: field(path, r, 0)?,
                d2_ged: field(path, r, 1)?,
                expected_distance: field(path, r, 2)?,
                diversity: field(path, r, 3)?,
                expected_dsc: field(path, r, 4)?,
            })
        })
        .collect()
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_records(path)?
        .iter()
        .map(|r| {
            Ok(SummaryRow {
                metric: field(path, r, 0)?,
                mean: opt_field(path, r, 1)?,
                std: opt_field(path, r, 2)?,
                skipped_hd95: field(path, r, 3)?,
            })
        })
        .collect()
}
