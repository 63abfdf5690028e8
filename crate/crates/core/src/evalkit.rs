//! Baselines and comparisons: random-search tuning curves, learning-rate
//! sweeps, repeat-median evaluation of external lists, and the bundled
//! five-point list.
//!
//! Tuning curves treat the per-point best metrics of one workload as the
//! empirical distribution of a single random-search draw. With the sample
//! sorted best-first as `x_1, ..., x_n`, the best of `b` independent draws
//! is worse than or equal to `x_j` with probability `((n - j + 1) / n)^b`,
//! which gives the expectation and quantiles in closed form.

use std::cmp::Ordering;
use std::io::Write;

use num_traits::{pow, FromPrimitive, Num};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hpspace::{HyperparameterPoint, PointId};
use crate::scalar::Scalar;
use crate::trialstore::{MetricDirection, TargetStep};
use crate::workbench::{run_trial_repeat, WorkloadSpec};

/// Default band confidence.
pub const DEFAULT_CONFIDENCE: f64 = 0.7;

fn from_count<T: FromPrimitive>(n: usize) -> T {
    T::from_usize(n).expect("count representable in the scalar type")
}

/// Sorts a copy of `scores` best-first.
fn sorted_best_first<T: PartialOrd + Clone>(scores: &[T], direction: MetricDirection) -> Result<Vec<T>> {
    if scores.iter().any(|s| s.partial_cmp(s).is_none()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let mut v = scores.to_vec();
    v.sort_by(|a, b| {
        let o = a.partial_cmp(b).unwrap_or(Ordering::Equal);
        match direction {
            MetricDirection::Minimize => o,
            MetricDirection::Maximize => o.reverse(),
        }
    });
    Ok(v)
}

/// `P(best of b draws is at least as good as x_j)` for `j = 1..=n`, in
/// best-first order.
fn best_of_cdf<T: Num + Clone + FromPrimitive>(n: usize, b: usize) -> Vec<T> {
    let nn: T = from_count(n);
    (1..=n)
        .map(|j| T::one() - pow(from_count::<T>(n - j) / nn.clone(), b))
        .collect()
}

/// Expected best of `b` draws with replacement from `scores`. Exact for exact
/// arithmetic types such as rationals.
pub fn expected_best<T>(scores: &[T], b: usize, direction: MetricDirection) -> Result<T>
where
    T: Num + Clone + PartialOrd + FromPrimitive,
{
    if scores.is_empty() || b == 0 {
        return Err(Error::InvalidArgument("expected best needs scores and b >= 1".into()));
    }
    let sorted = sorted_best_first(scores, direction)?;
    let cdf = best_of_cdf::<T>(sorted.len(), b);
    let mut prev = T::zero();
    let mut acc = T::zero();
    for (x, c) in sorted.into_iter().zip(cdf) {
        acc = acc + x * (c.clone() - prev);
        prev = c;
    }
    Ok(acc)
}

/// The `q`-quantile of the best-of-`b` distribution, counted from the best
/// end (`q` near 0 is optimistic).
pub fn best_of_quantile<T>(scores: &[T], b: usize, q: f64, direction: MetricDirection) -> Result<T>
where
    T: Num + Clone + PartialOrd + FromPrimitive,
{
    if scores.is_empty() || b == 0 || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("bad quantile request q={q}, b={b}")));
    }
    let sorted = sorted_best_first(scores, direction)?;
    // The slack keeps rounding in `1 - (k/n)^b` from skipping an exact hit.
    let q: T = T::from_f64(q - 1e-12).expect("quantile representable");
    let cdf = best_of_cdf::<T>(sorted.len(), b);
    let j = cdf.iter().position(|c| *c >= q).unwrap_or(sorted.len() - 1);
    Ok(sorted[j].clone())
}

/// Expected best metric after `b` random-search trials, `b = 1..=B`, with
/// order-statistic bands.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve<T> {
    pub budgets: Vec<usize>,
    pub central: Vec<T>,
    /// Numerically lower band edge (the optimistic edge when minimising).
    pub band_low: Vec<T>,
    pub band_high: Vec<T>,
    pub direction: MetricDirection,
    pub confidence: f64,
}

impl<T: Scalar> TuningCurve<T> {
    /// Central value at budget `b`.
    pub fn at(&self, b: usize) -> Option<T> {
        b.checked_sub(1).and_then(|i| self.central.get(i)).copied()
    }
}

/// Builds a tuning curve up to budget `max_budget` from per-point best metrics.
///
/// Band edges are the `(1 - c) / 2` and `(1 + c) / 2` quantiles of the
/// best-of-`b` distribution. For strongly skewed samples the mean can fall
/// outside those quantiles; the band is then widened to include it.
pub fn tuning_curve<T: Scalar>(
    scores: &[T],
    max_budget: usize,
    confidence: f64,
    direction: MetricDirection,
) -> Result<TuningCurve<T>> {
    if max_budget == 0 || scores.len() < max_budget {
        return Err(Error::InvalidArgument(format!(
            "tuning curve to budget {max_budget} needs at least that many scores, got {}",
            scores.len()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {confidence} outside (0, 1)")));
    }
    let optimistic_q = (1.0 - confidence) / 2.0;
    let pessimistic_q = (1.0 + confidence) / 2.0;
    let mut curve = TuningCurve {
        budgets: (1..=max_budget).collect(),
        central: Vec::with_capacity(max_budget),
        band_low: Vec::with_capacity(max_budget),
        band_high: Vec::with_capacity(max_budget),
        direction,
        confidence,
    };
    for b in 1..=max_budget {
        let c = expected_best(scores, b, direction)?;
        let good = best_of_quantile(scores, b, optimistic_q, direction)?;
        let bad = best_of_quantile(scores, b, pessimistic_q, direction)?;
        let (lo, hi) = if good <= bad { (good, bad) } else { (bad, good) };
        curve.central.push(c);
        curve.band_low.push(lo.min(c));
        curve.band_high.push(hi.max(c));
    }
    Ok(curve)
}

pub const CURVE_HEADER: &str = "budget,central,low,high";

pub fn write_curve<T: Scalar, W: Write>(mut out: W, curve: &TuningCurve<T>) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for i in 0..curve.budgets.len() {
        writeln!(
            out,
            "{},{:?},{:?},{:?}",
            curve.budgets[i], curve.central[i], curve.band_low[i], curve.band_high[i]
        )?;
    }
    Ok(())
}

/// Points whose learning rates are `count` log-equispaced values over
/// `[lo, hi]`, endpoints exact. Other fields: beta1 0.9, beta2 0.999, warmup
/// 0.05, no label smoothing, no dropout.
pub fn lr_sweep_points(lo: f64, hi: f64, count: usize, weight_decay: f64) -> Result<Vec<HyperparameterPoint>> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!("a sweep needs at least 2 points, got {count}")));
    }
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("sweep range [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            let base_lr = match i {
                0 => lo,
                _ if i + 1 == count => hi,
                _ => 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64),
            };
            let p = HyperparameterPoint {
                id: PointId(i as u32),
                base_lr,
                beta1: 0.9,
                beta2: 0.999,
                warmup_fraction: 0.05,
                weight_decay,
                label_smoothing: 0.0,
                dropout: 0.0,
            };
            p.validate()?;
            Ok(p)
        })
        .collect()
}

/// Repeat-median outcome of a list on one workload.
#[derive(Debug, Clone, PartialEq)]
pub struct ListEvaluation {
    pub workload: String,
    pub budget: u64,
    /// The list's earliest target step in each repeat.
    pub per_repeat: Vec<TargetStep>,
    pub median: TargetStep,
    /// `median / budget`, or infinity when the median repeat never reached
    /// the target.
    pub step_fraction: f64,
}

impl ListEvaluation {
    pub fn success(&self) -> bool {
        self.median.is_reached()
    }
}

/// Median of an odd-length set of target steps (`Never` sorts last).
pub fn median_step(steps: &[TargetStep]) -> Result<TargetStep> {
    if steps.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "median of {} repeats is ambiguous; use an odd count",
            steps.len()
        )));
    }
    let mut s = steps.to_vec();
    s.sort();
    Ok(s[s.len() / 2])
}

/// Runs every point `repeats` times on every workload (repeat `r` uses the
/// derived stream `r`), takes the list's best step per repeat and reports the
/// median.
pub fn evaluate_list(
    points: &[HyperparameterPoint],
    workloads: &[WorkloadSpec],
    repeats: usize,
) -> Result<Vec<ListEvaluation>> {
    if repeats.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("repeats must be odd, got {repeats}")));
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty list".into()));
    }
    let jobs: Vec<(usize, usize, usize)> = (0..workloads.len())
        .flat_map(|w| (0..repeats).flat_map(move |r| (0..points.len()).map(move |p| (w, r, p))))
        .collect();
    let steps: Vec<TargetStep> = jobs
        .par_iter()
        .map(|&(w, r, p)| run_trial_repeat(&workloads[w], &points[p], r as u64).map(|t| t.first_target_step))
        .collect::<Result<_>>()?;
    let per_workload = repeats * points.len();
    workloads
        .iter()
        .enumerate()
        .map(|(w, spec)| {
            let block = &steps[w * per_workload..(w + 1) * per_workload];
            let per_repeat: Vec<TargetStep> = block
                .chunks(points.len())
                .map(|c| c.iter().copied().min().expect("non-empty list"))
                .collect();
            let median = median_step(&per_repeat)?;
            Ok(ListEvaluation {
                workload: spec.id.clone(),
                budget: spec.total_steps,
                step_fraction: match median {
                    TargetStep::At(s) => s as f64 / spec.total_steps as f64,
                    TargetStep::Never => f64::INFINITY,
                },
                per_repeat,
                median,
            })
        })
        .collect()
}

/// The bundled five-point list in priority order (ids 1 to 5).
pub fn bundled_final_list() -> Vec<HyperparameterPoint> {
    // base_lr, warmup, beta1, beta2, weight_decay, dropout, label_smoothing
    const ROWS: [[f64; 7]; 5] = [
        [0.007188680089024849, 0.1, 0.9521079797438937, 0.9545645606521953, 0.020932289532959312, 0.0, 0.2],
        [0.0011719210768906827, 0.02, 0.9641782560318817, 0.9953311727740848, 0.15957548811577366, 0.1, 0.0],
        [0.001183374563441696, 0.02, 0.918959806679234, 0.9941923836947718, 0.028400661323288435, 0.1, 0.1],
        [0.0014515212275017363, 0.1, 0.9600296609757403, 0.889423091749684, 0.031808785805059143, 0.0, 0.2],
        [0.0005102205206215031, 0.05, 0.9120180064671332, 0.9597041640569521, 0.04833675039698776, 0.1, 0.0],
    ];
    ROWS.iter()
        .enumerate()
        .map(|(i, r)| HyperparameterPoint {
            id: PointId(i as u32 + 1),
            base_lr: r[0],
            warmup_fraction: r[1],
            beta1: r[2],
            beta2: r[3],
            weight_decay: r[4],
            dropout: r[5],
            label_smoothing: r[6],
        })
        .collect()
}

/// Rows = methods, columns = workloads; infinite entries mark unreached
/// targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub workloads: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ComparisonTable {
    pub fn new(workloads: Vec<String>) -> Self {
        Self { workloads, rows: Vec::new() }
    }

    pub fn push(&mut self, method: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.workloads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} workloads",
                values.len(),
                self.workloads.len()
            )));
        }
        self.rows.push((method.into(), values));
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,{}", self.workloads.join(","))?;
        for (method, values) in &self.rows {
            let cells: Vec<String> = values
                .iter()
                .map(|v| if v.is_infinite() { "inf".to_string() } else { format!("{v:.6}") })
                .collect();
            writeln!(out, "{method},{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Fixed-width text rendering.
    pub fn to_text(&self) -> String {
        let width = self.workloads.iter().map(String::len).max().unwrap_or(0).max(9);
        let label = self.rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:<label$}", "method");
        for w in &self.workloads {
            s.push_str(&format!(" {w:>width$}"));
        }
        s.push('\n');
        for (method, values) in &self.rows {
            s.push_str(&format!("{method:<label$}"));
            for v in values {
                let cell = if v.is_infinite() { "inf".to_string() } else { format!("{v:.4}") };
                s.push_str(&format!(" {cell:>width$}"));
            }
            s.push('\n');
        }
        s
    }
}
