//! Ordered hyperparameter lists.
//!
//! [`greedy_build`] grows a list one point at a time, each round appending the
//! point that minimises the cost of the extended list (ties go to the smallest
//! point id). Because every prefix is itself the greedy answer for a smaller
//! budget, one list serves every budget up to its length. [`exhaustive_build`]
//! is the unordered baseline that searches all `P choose K` subsets.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpspace::{HyperparameterPoint, PointId};
use crate::scalar::Scalar;
use crate::scoring::{cost_of_times, costs_tie, step_fraction, CostParams};
use crate::trialstore::{MetricDirection, TargetStep, TrialMatrix};

/// Default ceiling on the number of subsets [`exhaustive_build`] may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 5_000_000;

/// A ranked list of point ids with the cost of every prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedList<T> {
    pub entries: Vec<PointId>,
    /// `prefix_costs[k]` is the cost of the first `k + 1` entries.
    pub prefix_costs: Vec<T>,
    pub tau: T,
    /// Workloads whose trials were used to build the list.
    pub provenance: Vec<String>,
}

impl<T: Scalar> OrderedList<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The list truncated to its first `k` entries.
    pub fn prefix(&self, k: usize) -> OrderedList<T> {
        let k = k.min(self.len());
        OrderedList {
            entries: self.entries[..k].to_vec(),
            prefix_costs: self.prefix_costs[..k].to_vec(),
            tau: self.tau,
            provenance: self.provenance.clone(),
        }
    }
}

fn budgets(matrix: &TrialMatrix) -> Vec<u64> {
    matrix.workloads().iter().map(|w| w.budget).collect()
}

/// Greedily builds a `k`-point ordered list. Each round appends the unused
/// point that minimises the extended list's cost; ties (see
/// [`costs_tie`](crate::scoring::costs_tie)) go to the smallest id.
pub fn greedy_build<T: Scalar>(
    matrix: &TrialMatrix,
    k: usize,
    params: &CostParams<T>,
) -> Result<OrderedList<T>> {
    let p = matrix.num_points();
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!(
            "list size {k} must lie in 1..={p}"
        )));
    }
    let n = matrix.num_workloads();
    let budgets = budgets(matrix);
    let tau = params.tau();
    let mut current = vec![TargetStep::Never; n];
    let mut used = vec![false; p];
    let mut list = OrderedList {
        entries: Vec::with_capacity(k),
        prefix_costs: Vec::with_capacity(k),
        tau,
        provenance: matrix.workloads().iter().map(|w| w.id.clone()).collect(),
    };

    for _ in 0..k {
        let costs: Vec<(T, PointId, usize)> = (0..p)
            .into_par_iter()
            .filter(|&i| !used[i])
            .map(|i| {
                let row = matrix.row(i);
                let times: Vec<TargetStep> = current
                    .iter()
                    .zip(row)
                    .map(|(&t, c)| t.min(c.first_target_step))
                    .collect();
                let cost = cost_of_times(&times, budgets.iter().copied(), tau);
                (cost, matrix.points()[i].id, i)
            })
            .collect();
        let min_cost = costs
            .iter()
            .map(|c| c.0)
            .fold(T::infinity(), T::min);
        let best = *costs
            .iter()
            .filter(|c| c.0 <= min_cost || costs_tie(c.0, min_cost))
            .min_by_key(|c| c.1)
            .expect("k <= P leaves a candidate every round");
        let (cost, id, i) = best;
        used[i] = true;
        for (t, c) in current.iter_mut().zip(matrix.row(i)) {
            *t = (*t).min(c.first_target_step);
        }
        list.entries.push(id);
        list.prefix_costs.push(cost);
    }
    Ok(list)
}

/// Best unordered subset found by exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetChoice<T> {
    /// Sorted ascending.
    pub ids: Vec<PointId>,
    pub cost: T,
}

/// `n choose k`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(x) => x / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Evaluates every `k`-subset and returns the cheapest; ties go to the
/// lexicographically smallest sorted id set.
pub fn exhaustive_build<T: Scalar>(
    matrix: &TrialMatrix,
    k: usize,
    params: &CostParams<T>,
    cap: u128,
) -> Result<SubsetChoice<T>> {
    let p = matrix.num_points();
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!(
            "subset size {k} must lie in 1..={p}"
        )));
    }
    let combinations = binomial(p as u64, k as u64);
    if combinations > cap {
        return Err(Error::EnumerationCap { combinations, cap });
    }
    // Enumerate rows in id order so lexicographic index order is id order.
    let mut rows: Vec<usize> = (0..p).collect();
    rows.sort_by_key(|&i| matrix.points()[i].id);
    let budgets = budgets(matrix);
    let n = matrix.num_workloads();
    let tau = params.tau();

    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut times = vec![TargetStep::Never; n];
    loop {
        times.fill(TargetStep::Never);
        for &j in &idx {
            for (t, c) in times.iter_mut().zip(matrix.row(rows[j])) {
                *t = (*t).min(c.first_target_step);
            }
        }
        let cost = cost_of_times(&times, budgets.iter().copied(), tau);
        if best.as_ref().is_none_or(|(c, _)| cost < *c && !costs_tie(cost, *c)) {
            best = Some((cost, idx.clone()));
        }
        // Advance to the next combination in lexicographic order.
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < p - k + i) else {
            break;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
    let (cost, idx) = best.expect("at least one subset");
    Ok(SubsetChoice {
        ids: idx.iter().map(|&j| matrix.points()[rows[j]].id).collect(),
        cost,
    })
}

/// Outcome of one leave-one-workload-out fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult<T> {
    pub held_out: String,
    /// List built without the held-out workload.
    pub list: OrderedList<T>,
    /// Earliest target step on the held-out workload over the listed points.
    pub best: TargetStep,
    /// Held-out step fraction (`tau` when never reached).
    pub step_fraction: T,
    /// Best validation metric on the held-out workload over the listed points.
    pub best_metric: f64,
}

impl<T> FoldResult<T> {
    pub fn success(&self) -> bool {
        self.best.is_reached()
    }
}

fn evaluate_fold<T: Scalar>(
    matrix: &TrialMatrix,
    w: usize,
    list: OrderedList<T>,
    direction: MetricDirection,
) -> Result<FoldResult<T>> {
    let info = &matrix.workloads()[w];
    let mut best = TargetStep::Never;
    let mut best_metric: Option<f64> = None;
    for &id in &list.entries {
        let c = matrix.cell(matrix.point_index(id)?, w);
        best = best.min(c.first_target_step);
        if best_metric.is_none_or(|b| direction.better(c.best_metric, b)) {
            best_metric = Some(c.best_metric);
        }
    }
    Ok(FoldResult {
        held_out: info.id.clone(),
        step_fraction: step_fraction(best, info.budget, list.tau)?,
        best,
        best_metric: best_metric.unwrap_or(f64::NAN),
        list,
    })
}

/// For every workload, builds a `k`-point list on the others and scores it on
/// the held-out one. [`FoldResult::best_metric`] treats smaller as better; use
/// [`leave_one_out_directed`] when some metrics are maximised.
pub fn leave_one_out<T: Scalar>(
    matrix: &TrialMatrix,
    k: usize,
    params: &CostParams<T>,
) -> Result<Vec<FoldResult<T>>> {
    let directions = vec![MetricDirection::Minimize; matrix.num_workloads()];
    leave_one_out_directed(matrix, k, params, &directions)
}

/// [`leave_one_out`] with one metric direction per workload column.
pub fn leave_one_out_directed<T: Scalar>(
    matrix: &TrialMatrix,
    k: usize,
    params: &CostParams<T>,
    directions: &[MetricDirection],
) -> Result<Vec<FoldResult<T>>> {
    if matrix.num_workloads() < 2 {
        return Err(Error::InvalidArgument(
            "leave-one-out needs at least two workloads".into(),
        ));
    }
    if directions.len() != matrix.num_workloads() {
        return Err(Error::InvalidArgument(format!(
            "{} metric directions for {} workloads",
            directions.len(),
            matrix.num_workloads()
        )));
    }
    (0..matrix.num_workloads())
        .into_par_iter()
        .map(|w| {
            let id = &matrix.workloads()[w].id;
            let train = matrix.drop_workload(id)?;
            let list = greedy_build(&train, k, params)?;
            evaluate_fold(matrix, w, list, directions[w])
        })
        .collect()
}

pub fn heldout_successes<T>(folds: &[FoldResult<T>]) -> usize {
    folds.iter().filter(|f| f.success()).count()
}

/// One row of the penalty-factor ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow<T> {
    pub tau: T,
    pub folds: Vec<FoldResult<T>>,
    pub successes: usize,
}

/// Runs leave-one-out at each penalty factor. `tau = 1` is admitted here.
pub fn ablate_penalty<T: Scalar>(
    matrix: &TrialMatrix,
    k: usize,
    tau_grid: &[T],
) -> Result<Vec<AblationRow<T>>> {
    tau_grid
        .iter()
        .map(|&tau| {
            let params = CostParams::for_ablation(tau)?;
            let folds = leave_one_out(matrix, k, &params)?;
            Ok(AblationRow {
                tau,
                successes: heldout_successes(&folds),
                folds,
            })
        })
        .collect()
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn tau_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    match count {
        0 => Err(Error::InvalidArgument("tau grid needs at least one value".into())),
        1 => Ok(vec![lo]),
        _ if lo.is_nan() || hi.is_nan() || lo > hi => Err(Error::InvalidArgument(format!("tau grid {lo} > {hi}"))),
        _ => Ok((0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect()),
    }
}

/// One point of the list-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSweepRow<T> {
    pub k: usize,
    pub successes: usize,
    /// Mean over folds of the held-out cost (the held-out step fraction).
    pub mean_heldout_cost: T,
}

/// Leave-one-out at every list size `1..=k_max`. Each fold's greedy list is
/// built once at `k_max` and truncated, which is exact by the prefix property.
pub fn size_sweep<T: Scalar>(
    matrix: &TrialMatrix,
    k_max: usize,
    params: &CostParams<T>,
) -> Result<Vec<SizeSweepRow<T>>> {
    let folds = leave_one_out(matrix, k_max, params)?;
    (1..=k_max)
        .map(|k| {
            let mut successes = 0;
            let mut total = T::zero();
            for f in &folds {
                let w = matrix.workload_index(&f.held_out)?;
                let fold = evaluate_fold(matrix, w, f.list.prefix(k), MetricDirection::Minimize)?;
                successes += usize::from(fold.success());
                total = total + fold.step_fraction;
            }
            Ok(SizeSweepRow {
                k,
                successes,
                mean_heldout_cost: total / T::from_count(folds.len()),
            })
        })
        .collect()
}

pub const LIST_HEADER: &str =
    "rank,base_lr,warmup_fraction,beta1,beta2,weight_decay,dropout,label_smoothing";

#[derive(Serialize, Deserialize)]
struct ListRow {
    rank: usize,
    base_lr: f64,
    warmup_fraction: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    dropout: f64,
    label_smoothing: f64,
}

/// Writes the listed points, in priority order, with 1-based ranks.
pub fn write_list_csv<W: Write>(
    out: W,
    points: &[&HyperparameterPoint],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, p) in points.iter().enumerate() {
        w.serialize(ListRow {
            rank: i + 1,
            base_lr: p.base_lr,
            warmup_fraction: p.warmup_fraction,
            beta1: p.beta1,
            beta2: p.beta2,
            weight_decay: p.weight_decay,
            dropout: p.dropout,
            label_smoothing: p.label_smoothing,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a list written by [`write_list_csv`]. Ranks must run 1, 2, ... and
/// become the point ids.
pub fn read_list_csv<R: Read>(input: R, origin: &Path) -> Result<Vec<HyperparameterPoint>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != LIST_HEADER {
        return Err(Error::parse(origin, 1, format!("expected header {LIST_HEADER:?}, found {headers:?}")));
    }
    let mut points = Vec::new();
    for (i, rec) in r.deserialize::<ListRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if row.rank != i + 1 {
            return Err(Error::parse(origin, line, format!("expected rank {}, found {}", i + 1, row.rank)));
        }
        let p = HyperparameterPoint {
            id: PointId(row.rank as u32),
            base_lr: row.base_lr,
            beta1: row.beta1,
            beta2: row.beta2,
            warmup_fraction: row.warmup_fraction,
            weight_decay: row.weight_decay,
            label_smoothing: row.label_smoothing,
            dropout: row.dropout,
        };
        p.validate().map_err(|e| Error::parse(origin, line, e.to_string()))?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::parse(origin, 1, "list has no entries"));
    }
    Ok(points)
}
