//! Trial matrices: the complete grid of first-target steps for every
//! (point, workload) pair, and its on-disk formats.
//!
//! Records file, one trial per line after a header:
//!
//! ```text
//! point_id,workload_id,budget,first_target_step,best_metric
//! 0,bowl,1000,-1,3.25
//! ```
//!
//! `-1` encodes a target that was never reached. An archive directory holds
//! `points.csv`, `workloads.csv` (budgets live per workload) and `cells.csv`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hpspace::{read_points, write_points, HyperparameterPoint, PointId};

pub const RECORDS_HEADER: &str = "point_id,workload_id,budget,first_target_step,best_metric";

/// First step at which a trial met its target, or `Never`. Orders with every
/// reached step before `Never`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetStep {
    At(u64),
    Never,
}

impl TargetStep {
    pub fn is_reached(self) -> bool {
        matches!(self, TargetStep::At(_))
    }

    pub fn step(self) -> Option<u64> {
        match self {
            TargetStep::At(s) => Some(s),
            TargetStep::Never => None,
        }
    }

    /// Disk encoding: the step, or `-1`.
    pub fn encode(self) -> i64 {
        match self {
            TargetStep::At(s) => s as i64,
            TargetStep::Never => -1,
        }
    }

    pub fn decode(x: i64) -> Option<Self> {
        match x {
            -1 => Some(TargetStep::Never),
            s if s >= 0 => Some(TargetStep::At(s as u64)),
            _ => None,
        }
    }
}

impl fmt::Display for TargetStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetStep::At(s) => write!(f, "{s}"),
            TargetStep::Never => f.write_str("never"),
        }
    }
}

/// Whether smaller or larger validation metrics are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricDirection {
    Minimize,
    Maximize,
}

impl MetricDirection {
    /// True when `a` is strictly better than `b`. NaN is never better and
    /// anything beats NaN.
    pub fn better(self, a: f64, b: f64) -> bool {
        if a.is_nan() {
            return false;
        }
        if b.is_nan() {
            return true;
        }
        match self {
            MetricDirection::Minimize => a < b,
            MetricDirection::Maximize => a > b,
        }
    }

    /// True when `value` meets `target`.
    pub fn meets(self, value: f64, target: f64) -> bool {
        match self {
            MetricDirection::Minimize => value <= target,
            MetricDirection::Maximize => value >= target,
        }
    }

    /// Best value of an iterator, skipping NaN.
    pub fn best(self, values: impl IntoIterator<Item = f64>) -> Option<f64> {
        values
            .into_iter()
            .filter(|v| !v.is_nan())
            .reduce(|a, b| if self.better(b, a) { b } else { a })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricDirection::Minimize => "minimize",
            MetricDirection::Maximize => "maximize",
        }
    }
}

impl fmt::Display for MetricDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimize" | "min" => Ok(MetricDirection::Minimize),
            "maximize" | "max" => Ok(MetricDirection::Maximize),
            _ => Err(Error::InvalidArgument(format!("unknown metric direction {s:?}"))),
        }
    }
}

/// One line of a records file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLine {
    pub point_id: PointId,
    pub workload_id: String,
    pub budget: u64,
    pub first_target_step: TargetStep,
    pub best_metric: f64,
}

impl RecordLine {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{:?}",
            self.point_id,
            self.workload_id,
            self.budget,
            self.first_target_step.encode(),
            self.best_metric
        )
    }

    fn parse(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [pid, wid, budget, step, metric] = fields[..] else {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        };
        let point_id = pid
            .parse::<u32>()
            .map(PointId)
            .map_err(|_| format!("bad point id {pid:?}"))?;
        if wid.is_empty() {
            return Err("empty workload id".into());
        }
        let budget = budget
            .parse::<u64>()
            .ok()
            .filter(|&b| b >= 1)
            .ok_or_else(|| format!("bad budget {budget:?}"))?;
        let first_target_step = step
            .parse::<i64>()
            .ok()
            .and_then(TargetStep::decode)
            .ok_or_else(|| format!("bad first_target_step {step:?}"))?;
        let best_metric = metric
            .parse::<f64>()
            .map_err(|_| format!("bad best_metric {metric:?}"))?;
        Ok(Self {
            point_id,
            workload_id: wid.to_string(),
            budget,
            first_target_step,
            best_metric,
        })
    }
}

/// Parsed records file contents.
#[derive(Debug, Clone, Default)]
pub struct RecordsFile {
    pub records: Vec<RecordLine>,
    /// An unterminated final line was dropped (only in lenient mode).
    pub dropped_partial_tail: bool,
}

/// Parses a records file. In `lenient_tail` mode an unparseable final line
/// without a trailing newline (an interrupted write) is dropped instead of
/// failing.
pub fn parse_records(text: &str, origin: &Path, lenient_tail: bool) -> Result<RecordsFile> {
    let mut out = RecordsFile::default();
    let terminated = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == RECORDS_HEADER {
            continue;
        }
        match RecordLine::parse(line) {
            Ok(r) => out.records.push(r),
            Err(_) if lenient_tail && !terminated && i + 1 == lines.len() => {
                out.dropped_partial_tail = true;
            }
            Err(msg) => return Err(Error::parse(origin, i + 1, msg)),
        }
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut out: W, records: &[RecordLine]) -> std::io::Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

/// A workload as seen by the selection math: its id and step budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadInfo {
    #[serde(rename = "workload_id")]
    pub id: String,
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub first_target_step: TargetStep,
    pub best_metric: f64,
}

impl Cell {
    fn same(&self, other: &Cell) -> bool {
        self.first_target_step == other.first_target_step
            && self.best_metric.to_bits() == other.best_metric.to_bits()
    }
}

/// Complete `points x workloads` grid of trial outcomes. Immutable once built.
#[derive(Debug, Clone)]
pub struct TrialMatrix {
    points: Vec<HyperparameterPoint>,
    workloads: Vec<WorkloadInfo>,
    cells: Vec<Cell>,
    index: HashMap<PointId, usize>,
}

impl PartialEq for TrialMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
            && self.workloads == other.workloads
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| a.same(b))
    }
}

/// Per-workload success counts and how many of those successes transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferCount {
    pub workload: String,
    pub successes: usize,
    pub also_one_other: usize,
    pub also_two_others: usize,
}

#[derive(Serialize, Deserialize)]
struct CellRow {
    point_id: PointId,
    workload_id: String,
    first_target_step: i64,
    best_metric: f64,
}

impl TrialMatrix {
    /// Builds a matrix from row-major cells (`cells[p * n_workloads + w]`).
    pub fn new(
        points: Vec<HyperparameterPoint>,
        workloads: Vec<WorkloadInfo>,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        if points.is_empty() || workloads.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if cells.len() != points.len() * workloads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} cells for a {}x{} matrix",
                cells.len(),
                points.len(),
                workloads.len()
            )));
        }
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.id, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate point id {}", p.id)));
            }
        }
        let mut seen = HashSet::new();
        for w in &workloads {
            if !seen.insert(w.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate workload id {}", w.id)));
            }
            if w.budget == 0 {
                return Err(Error::InvalidArgument(format!("workload {} has zero budget", w.id)));
            }
        }
        let n = workloads.len();
        for (i, c) in cells.iter().enumerate() {
            let w = &workloads[i % n];
            match c.first_target_step {
                TargetStep::At(s) if s > w.budget => {
                    return Err(Error::StepBeyondBudget {
                        point: points[i / n].id,
                        workload: w.id.clone(),
                        step: s,
                        budget: w.budget,
                    })
                }
                TargetStep::At(0) => {
                    return Err(Error::InvalidArgument(format!(
                        "cell ({}, {}): first target step must be at least 1",
                        points[i / n].id, w.id
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            points,
            workloads,
            cells,
            index,
        })
    }

    /// Assembles a matrix from records plus point metadata, rejecting
    /// duplicates and incomplete grids.
    pub fn from_records(records: &[RecordLine], points: Vec<HyperparameterPoint>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoRecords);
        }
        let mut workloads: Vec<WorkloadInfo> = Vec::new();
        let mut widx: HashMap<&str, usize> = HashMap::new();
        for r in records {
            match widx.get(r.workload_id.as_str()) {
                Some(&i) if workloads[i].budget != r.budget => {
                    return Err(Error::InvalidArgument(format!(
                        "workload {} has inconsistent budgets {} and {}",
                        r.workload_id, workloads[i].budget, r.budget
                    )))
                }
                Some(_) => {}
                None => {
                    widx.insert(&r.workload_id, workloads.len());
                    workloads.push(WorkloadInfo {
                        id: r.workload_id.clone(),
                        budget: r.budget,
                    });
                }
            }
        }
        let pidx: HashMap<PointId, usize> =
            points.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
        let n = workloads.len();
        let mut grid: Vec<Option<Cell>> = vec![None; points.len() * n];
        for r in records {
            let &p = pidx.get(&r.point_id).ok_or(Error::UnknownPoint(r.point_id))?;
            let w = widx[r.workload_id.as_str()];
            if let TargetStep::At(s) = r.first_target_step {
                if s > r.budget {
                    return Err(Error::StepBeyondBudget {
                        point: r.point_id,
                        workload: r.workload_id.clone(),
                        step: s,
                        budget: r.budget,
                    });
                }
            }
            let slot = &mut grid[p * n + w];
            if slot.is_some() {
                return Err(Error::DuplicateCell {
                    point: r.point_id,
                    workload: r.workload_id.clone(),
                });
            }
            *slot = Some(Cell {
                first_target_step: r.first_target_step,
                best_metric: r.best_metric,
            });
        }
        let gaps: Vec<(PointId, String)> = grid
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| (points[i / n].id, workloads[i % n].id.clone()))
            .collect();
        if !gaps.is_empty() {
            return Err(Error::MissingCells(gaps));
        }
        Self::new(points, workloads, grid.into_iter().flatten().collect())
    }

    pub fn points(&self) -> &[HyperparameterPoint] {
        &self.points
    }

    pub fn workloads(&self) -> &[WorkloadInfo] {
        &self.workloads
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_workloads(&self) -> usize {
        self.workloads.len()
    }

    pub fn point_ids(&self) -> impl Iterator<Item = PointId> + '_ {
        self.points.iter().map(|p| p.id)
    }

    pub fn point_index(&self, id: PointId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownPoint(id))
    }

    pub fn workload_index(&self, id: &str) -> Result<usize> {
        self.workloads
            .iter()
            .position(|w| w.id == id)
            .ok_or_else(|| Error::UnknownWorkload(id.to_string()))
    }

    pub fn point(&self, id: PointId) -> Result<&HyperparameterPoint> {
        Ok(&self.points[self.point_index(id)?])
    }

    /// Cell by row/column position.
    pub fn cell(&self, point: usize, workload: usize) -> &Cell {
        &self.cells[point * self.workloads.len() + workload]
    }

    pub fn row(&self, point: usize) -> &[Cell] {
        let n = self.workloads.len();
        &self.cells[point * n..(point + 1) * n]
    }

    /// Best metrics of every point on one workload, in point order.
    pub fn column_metrics(&self, workload: usize) -> Vec<f64> {
        (0..self.num_points())
            .map(|p| self.cell(p, workload).best_metric)
            .collect()
    }

    /// Copy of this matrix without one workload.
    pub fn drop_workload(&self, id: &str) -> Result<TrialMatrix> {
        let w = self.workload_index(id)?;
        if self.workloads.len() == 1 {
            return Err(Error::EmptyMatrix);
        }
        let n = self.workloads.len();
        let workloads = self
            .workloads
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != w)
            .map(|(_, x)| x.clone())
            .collect();
        let cells = self
            .cells
            .iter()
            .enumerate()
            .filter(|&(i, _)| i % n != w)
            .map(|(_, c)| *c)
            .collect();
        Ok(TrialMatrix {
            points: self.points.clone(),
            workloads,
            cells,
            index: self.index.clone(),
        })
    }

    /// Returns a copy where one workload's column is replaced via `f`.
    pub fn map_column(&self, id: &str, mut f: impl FnMut(usize, &Cell) -> Cell) -> Result<TrialMatrix> {
        let w = self.workload_index(id)?;
        let mut out = self.clone();
        for p in 0..self.num_points() {
            let c = self.cell(p, w);
            out.cells[p * self.workloads.len() + w] = f(p, c);
        }
        Self::new(out.points, out.workloads, out.cells)
    }

    pub fn transfer_counts(&self) -> Vec<TransferCount> {
        let wins: Vec<usize> = (0..self.num_points())
            .map(|p| self.row(p).iter().filter(|c| c.first_target_step.is_reached()).count())
            .collect();
        self.workloads
            .iter()
            .enumerate()
            .map(|(w, info)| {
                let mut t = TransferCount {
                    workload: info.id.clone(),
                    successes: 0,
                    also_one_other: 0,
                    also_two_others: 0,
                };
                for (p, &total) in wins.iter().enumerate() {
                    if self.cell(p, w).first_target_step.is_reached() {
                        t.successes += 1;
                        let others = total - 1;
                        t.also_one_other += usize::from(others >= 1);
                        t.also_two_others += usize::from(others >= 2);
                    }
                }
                t
            })
            .collect()
    }

    pub fn to_records(&self) -> Vec<RecordLine> {
        let mut out = Vec::with_capacity(self.cells.len());
        for (p, point) in self.points.iter().enumerate() {
            for (w, info) in self.workloads.iter().enumerate() {
                let c = self.cell(p, w);
                out.push(RecordLine {
                    point_id: point.id,
                    workload_id: info.id.clone(),
                    budget: info.budget,
                    first_target_step: c.first_target_step,
                    best_metric: c.best_metric,
                });
            }
        }
        out
    }

    /// SHA-256 over the canonical records serialization plus point metadata.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        write_points(&mut buf, &self.points).expect("in-memory write");
        h.update(&buf);
        buf.clear();
        write_records(&mut buf, &self.to_records()).expect("in-memory write");
        h.update(&buf);
        hex::encode(h.finalize())
    }

    /// Writes `points.csv`, `workloads.csv` and `cells.csv` into `dir`.
    pub fn export_archive(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_err = |path: &Path, e: csv::Error| Error::io(path, std::io::Error::other(e));

        let path = dir.join("points.csv");
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_points(f, &self.points).map_err(|e| csv_err(&path, e))?;

        let path = dir.join("workloads.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for info in &self.workloads {
            w.serialize(info).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("cells.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for r in self.to_records() {
            w.serialize(CellRow {
                point_id: r.point_id,
                workload_id: r.workload_id,
                first_target_step: r.first_target_step.encode(),
                best_metric: r.best_metric,
            })
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Reads an archive written by [`TrialMatrix::export_archive`].
    pub fn ingest_archive(dir: &Path) -> Result<TrialMatrix> {
        let path = dir.join("points.csv");
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let points = read_points(f, &path)?;

        let path = dir.join("workloads.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        let mut workloads: Vec<WorkloadInfo> = Vec::new();
        for rec in r.deserialize() {
            workloads.push(rec.map_err(|e| {
                Error::parse(&path, e.position().map_or(0, |p| p.line() as usize), e.to_string())
            })?);
        }

        let path = dir.join("cells.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        let mut records = Vec::new();
        for rec in r.deserialize::<CellRow>() {
            let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line() as usize);
            let row = rec.map_err(|e| Error::parse(&path, line_of(&e), e.to_string()))?;
            let budget = workloads
                .iter()
                .find(|w| w.id == row.workload_id)
                .ok_or_else(|| Error::UnknownWorkload(row.workload_id.clone()))?
                .budget;
            records.push(RecordLine {
                point_id: row.point_id,
                workload_id: row.workload_id,
                budget,
                first_target_step: TargetStep::decode(row.first_target_step)
                    .ok_or_else(|| Error::parse(&path, 0, "bad first_target_step"))?,
                best_metric: row.best_metric,
            });
        }
        let m = Self::from_records(&records, points)?;
        // Keep the workload order declared in workloads.csv.
        let order: Result<Vec<usize>> = workloads.iter().map(|w| m.workload_index(&w.id)).collect();
        let order = order?;
        if order.len() != m.num_workloads() {
            return Err(Error::InvalidArgument(
                "workloads.csv and cells.csv disagree on workloads".into(),
            ));
        }
        let cells = (0..m.num_points())
            .flat_map(|p| order.iter().map(move |&w| (p, w)))
            .map(|(p, w)| *m.cell(p, w))
            .collect();
        Self::new(m.points, workloads, cells)
    }
}

/// Reads a records file plus its points sidecar into a matrix.
pub fn ingest(records_path: &Path, points_path: &Path) -> Result<TrialMatrix> {
    let text = fs::read_to_string(records_path).map_err(|e| Error::io(records_path, e))?;
    let parsed = parse_records(&text, records_path, false)?;
    let f = fs::File::open(points_path).map_err(|e| Error::io(points_path, e))?;
    let points = read_points(f, points_path)?;
    TrialMatrix::from_records(&parsed.records, points)
}
