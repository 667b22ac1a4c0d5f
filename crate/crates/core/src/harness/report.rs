//! Result tables, their aggregation and CSV round-tripping.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, Cell};
use crate::datasets::TaskId;
use crate::error::{invalid, Error, Result};
use crate::metrics::{CoverageReport, DiscrepancyMatrix, MdsEmbedding};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
}

/// Columns shared by every per-cell table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub task: TaskId,
    pub algorithm: Algorithm,
    pub label: String,
    pub hyper_index: usize,
    pub step_size: f64,
    pub cycles: Option<usize>,
    pub dropout_rate: Option<f64>,
}

impl CellKey {
    pub fn new(task: TaskId, cell: &Cell) -> Self {
        Self {
            task,
            algorithm: cell.algorithm,
            label: cell.label(),
            hyper_index: cell.hyper_index,
            step_size: cell.step_size,
            cycles: cell.cycles,
            dropout_rate: cell.dropout_rate,
        }
    }
}

/// One `(task, cell, replicate)` outcome; the `results.csv` schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: TaskId,
    pub algorithm: Algorithm,
    pub label: String,
    pub hyper_index: usize,
    pub step_size: f64,
    pub cycles: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub replicate: usize,
    pub status: Status,
    pub n_samples: usize,
    pub q2: Option<f64>,
    /// Coverage over the test set at the primary level.
    pub picp: Option<f64>,
    pub mmd_weight: Option<f64>,
    pub mmd_function: Option<f64>,
    pub ksd: Option<f64>,
}

impl ResultRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            task: self.task,
            algorithm: self.algorithm,
            label: self.label.clone(),
            hyper_index: self.hyper_index,
            step_size: self.step_size,
            cycles: self.cycles,
            dropout_rate: self.dropout_rate,
        }
    }
}

/// Per-cell summary over replicates; the `aggregates.csv` schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: TaskId,
    pub algorithm: Algorithm,
    pub label: String,
    pub hyper_index: usize,
    pub step_size: f64,
    pub cycles: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub level: f64,
    pub n_ok: usize,
    pub n_diverged: usize,
    pub mcp: Option<f64>,
    pub ccp_mae: Option<f64>,
    pub picp_mean: Option<f64>,
    pub picp_std: Option<f64>,
    pub q2_mean: Option<f64>,
    pub q2_std: Option<f64>,
    pub mmd_weight_mean: Option<f64>,
    pub mmd_function_mean: Option<f64>,
    pub ksd_mean: Option<f64>,
}

impl AggregateRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            task: self.task,
            algorithm: self.algorithm,
            label: self.label.clone(),
            hyper_index: self.hyper_index,
            step_size: self.step_size,
            cycles: self.cycles,
            dropout_rate: self.dropout_rate,
        }
    }
}

/// MCP of one cell at one level; the `coverage_curves_<task>.csv` schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub task: TaskId,
    pub algorithm: Algorithm,
    pub label: String,
    pub hyper_index: usize,
    pub step_size: f64,
    pub cycles: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub level: f64,
    pub mcp: f64,
}

/// Coverage of one test input across replicates; the `ccp_<task>.csv` schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcpRow {
    pub task: TaskId,
    pub label: String,
    pub test_index: usize,
    pub x: f64,
    pub level: f64,
    pub ccp: f64,
}

/// HMC reference diagnostics; the `hmc_summary.csv` schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcSummaryRow {
    pub task: TaskId,
    pub replicate: usize,
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub acceptance_rate: f64,
    pub n_samples: usize,
}

/// Wall-clock cost of one run; kept out of `results.csv` so that file stays
/// reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub task: TaskId,
    pub label: String,
    pub replicate: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Weight,
    Function,
}

/// One entry of a pairwise discrepancy matrix; the `mmd_matrix_<task>.csv`
/// schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub space: Space,
    pub row: String,
    pub col: String,
    pub mmd: f64,
}

/// Coverage indicators of one ok run at every level, `hits[level][test]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCoverage {
    pub replicate: usize,
    pub hits: Vec<Vec<bool>>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; zero for a single value.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Summarises the rows of one cell. `coverage` holds the indicators of its ok
/// runs; MCP and CCP are computed from them at `level`.
pub fn aggregate_cell(
    key: &CellKey,
    rows: &[&ResultRow],
    coverage: &[RunCoverage],
    levels: &[f64],
    level: f64,
) -> Result<(AggregateRow, Option<CoverageReport>)> {
    let ok: Vec<&&ResultRow> = rows.iter().filter(|r| r.status == Status::Ok).collect();
    let col = |f: fn(&ResultRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    let picps = col(|r| r.picp);
    let q2s = col(|r| r.q2);
    let li = levels
        .iter()
        .position(|&l| (l - level).abs() < 1e-12)
        .ok_or_else(|| invalid(format!("level {level} was not evaluated")))?;
    let report = if coverage.is_empty() {
        None
    } else {
        let hits: Vec<Vec<bool>> = coverage.iter().map(|c| c.hits[li].clone()).collect();
        Some(CoverageReport::from_indicators(&hits, level, q2s.clone())?)
    };
    let row = AggregateRow {
        task: key.task,
        algorithm: key.algorithm,
        label: key.label.clone(),
        hyper_index: key.hyper_index,
        step_size: key.step_size,
        cycles: key.cycles,
        dropout_rate: key.dropout_rate,
        level,
        n_ok: ok.len(),
        n_diverged: rows.len() - ok.len(),
        mcp: report.as_ref().map(|r| r.mcp),
        ccp_mae: report.as_ref().map(|r| r.ccp_mae),
        picp_mean: mean(&picps),
        picp_std: std_dev(&picps),
        q2_mean: mean(&q2s),
        q2_std: std_dev(&q2s),
        mmd_weight_mean: mean(&col(|r| r.mmd_weight)),
        mmd_function_mean: mean(&col(|r| r.mmd_function)),
        ksd_mean: mean(&col(|r| r.ksd)),
    };
    Ok((row, report))
}

/// MCP at every level from the indicators of the ok runs.
pub fn coverage_curve(key: &CellKey, coverage: &[RunCoverage], levels: &[f64]) -> Vec<CurveRow> {
    if coverage.is_empty() {
        return Vec::new();
    }
    levels
        .iter()
        .enumerate()
        .map(|(li, &level)| {
            let total: usize = coverage.iter().map(|c| c.hits[li].iter().filter(|&&h| h).count()).sum();
            let n = coverage.len() * coverage[0].hits[li].len();
            CurveRow {
                task: key.task,
                algorithm: key.algorithm,
                label: key.label.clone(),
                hyper_index: key.hyper_index,
                step_size: key.step_size,
                cycles: key.cycles,
                dropout_rate: key.dropout_rate,
                level,
                mcp: total as f64 / n as f64,
            }
        })
        .collect()
}

/// One histogram entry of the PICP-versus-MCP comparison: a PICP (one per
/// replicate) or a CCP (one per test input), alongside the cell's MCP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: TaskId,
    pub label: String,
    /// `picp` or `ccp`.
    pub kind: String,
    pub index: usize,
    pub value: f64,
    pub mcp: f64,
    pub level: f64,
}

/// Spread of PICP against the single MCP value of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub task: TaskId,
    pub label: String,
    pub level: f64,
    pub n_replicates: usize,
    pub mcp: f64,
    pub picp_std: f64,
    pub picp_min: f64,
    pub picp_max: f64,
    pub ccp_mae: Option<f64>,
}

/// Builds the PICP/CCP histogram data and per-cell summaries from the ok rows
/// of `results` and the matching `ccp` rows. The MCP is the mean PICP,
/// which equals the pooled coverage since every replicate shares one test
/// set.
pub fn picp_mcp_comparison(
    results: &[ResultRow],
    ccp: &[CcpRow],
    level: f64,
) -> (Vec<ComparisonRow>, Vec<ComparisonSummary>) {
    let mut cells: BTreeMap<(TaskId, usize, usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.status == Status::Ok && r.picp.is_some()) {
        let order = Algorithm::ALL
            .iter()
            .position(|a| *a == r.algorithm)
            .unwrap_or(usize::MAX);
        cells
            .entry((r.task, order, r.hyper_index, r.label.clone()))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for ((task, _, _, label), cell_rows) in cells {
        let picps: Vec<f64> = cell_rows.iter().filter_map(|r| r.picp).collect();
        if picps.len() < 20 {
            log::warn!(
                "{task} {label}: only {} replicates for the PICP comparison",
                picps.len()
            );
        }
        let mcp = mean(&picps).unwrap_or(f64::NAN);
        for r in &cell_rows {
            rows.push(ComparisonRow {
                task,
                label: label.clone(),
                kind: "picp".into(),
                index: r.replicate,
                value: r.picp.unwrap_or(f64::NAN),
                mcp,
                level,
            });
        }
        let cell_ccp: Vec<&CcpRow> = ccp
            .iter()
            .filter(|c| c.task == task && c.label == label && (c.level - level).abs() < 1e-12)
            .collect();
        for c in &cell_ccp {
            rows.push(ComparisonRow {
                task,
                label: label.clone(),
                kind: "ccp".into(),
                index: c.test_index,
                value: c.ccp,
                mcp,
                level,
            });
        }
        let ccp_mae = (!cell_ccp.is_empty())
            .then(|| cell_ccp.iter().map(|c| (c.ccp - level).abs()).sum::<f64>() / cell_ccp.len() as f64);
        summaries.push(ComparisonSummary {
            task,
            label,
            level,
            n_replicates: picps.len(),
            mcp,
            picp_std: std_dev(&picps).unwrap_or(0.0),
            picp_min: picps.iter().copied().fold(f64::INFINITY, f64::min),
            picp_max: picps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ccp_mae,
        });
    }
    (rows, summaries)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Long-format entries of a discrepancy matrix (both triangles and the
/// diagonal).
pub fn matrix_entries(space: Space, m: &DiscrepancyMatrix) -> Vec<MatrixEntry> {
    let mut out = Vec::with_capacity(m.len() * m.len());
    for i in 0..m.len() {
        for j in 0..m.len() {
            out.push(MatrixEntry {
                space,
                row: m.labels[i].clone(),
                col: m.labels[j].clone(),
                mmd: m.get(i, j),
            });
        }
    }
    out
}

/// Rebuilds the matrices of a `mmd_matrix_<task>.csv` file, one per space
/// present, with labels in first-appearance order.
pub fn matrices_from_entries(entries: &[MatrixEntry]) -> Result<Vec<(Space, DiscrepancyMatrix)>> {
    let mut spaces: Vec<Space> = entries.iter().map(|e| e.space).collect();
    spaces.sort();
    spaces.dedup();
    spaces
        .into_iter()
        .map(|space| {
            let mut labels: Vec<String> = Vec::new();
            for e in entries.iter().filter(|e| e.space == space) {
                if !labels.contains(&e.row) {
                    labels.push(e.row.clone());
                }
            }
            let n = labels.len();
            let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let mut values = vec![f64::NAN; n * n];
            for e in entries.iter().filter(|e| e.space == space) {
                let (i, j) = match (index.get(e.row.as_str()), index.get(e.col.as_str())) {
                    (Some(&i), Some(&j)) => (i, j),
                    _ => return Err(invalid(format!("column label {:?} never appears as a row", e.col))),
                };
                values[i * n + j] = e.mmd;
            }
            if values.iter().any(|v| v.is_nan()) {
                return Err(invalid("the discrepancy matrix has missing entries"));
            }
            Ok((space, DiscrepancyMatrix::new(labels, values)?))
        })
        .collect()
}

/// Writes `space,label,dim1..dimK,distortion` rows for each embedding.
pub fn write_mds(path: &Path, embeddings: &[(Space, DiscrepancyMatrix, MdsEmbedding)]) -> Result<()> {
    let dims = embeddings
        .iter()
        .flat_map(|(_, _, e)| e.coords.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["space".to_string(), "label".to_string()];
    header.extend((1..=dims).map(|k| format!("dim{k}")));
    header.push("distortion".into());
    w.write_record(&header)?;
    for (space, m, e) in embeddings {
        let space = match space {
            Space::Weight => "weight",
            Space::Function => "function",
        };
        for (label, coords) in m.labels.iter().zip(&e.coords) {
            let mut rec = vec![space.to_string(), label.clone()];
            rec.extend((0..dims).map(|k| coords.get(k).map_or(String::new(), |v| v.to_string())));
            rec.push(e.distortion.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
