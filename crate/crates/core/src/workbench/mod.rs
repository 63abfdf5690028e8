//! Desk-scale synthetic workloads and the trial runner.
//!
//! Each trial trains one [`HyperparameterPoint`] on one [`WorkloadSpec`] with
//! NAdamW under the warmup/cosine schedule. It evaluates the validation metric
//! every `eval_interval` steps and records the first evaluation that meets the
//! target. Training counts as diverged when the loss becomes non-finite or
//! exceeds [`DIVERGENCE_FACTOR`] times its initial value; a diverged trial
//! never reaches its target.

mod problems;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpspace::{HyperparameterPoint, PointId};
use crate::nadamw::{nadamw_step, NadamwConfig, OptimizerState, ScheduleSpec};
use crate::seeds;
pub use crate::trialstore::MetricDirection;
use crate::trialstore::{RecordLine, TargetStep, TrialMatrix, WorkloadInfo};

use problems::{Activation, Bowl, Classifier, LinReg, MatFact, Problem, StepCtx};

/// A trial is diverged once its training loss exceeds this multiple of the
/// loss at initialisation.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Default calibration quantile: the best tenth of points hit each target.
pub const DEFAULT_QUANTILE: f64 = 0.1;

/// Smallest point sample [`calibrate_targets`] accepts.
pub const MIN_CALIBRATION_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// Ill-conditioned quadratic with a known minimum value.
    QuadraticBowl,
    /// Noisy linear regression, validation R².
    LinearRegression,
    /// Logistic regression on two overlapping gaussian blobs.
    LogisticRegression,
    /// ReLU MLP on two moons, dropout active.
    MoonsMlp,
    /// Tanh twin of [`WorkloadKind::MoonsMlp`].
    MoonsMlpTanh,
    /// Softmax regression on ten gaussian clusters.
    Softmax10,
    /// Low-rank matrix completion, held-out MSE.
    MatrixFactorization,
    /// MLP trained on partly corrupted labels, evaluated on clean ones.
    NoisyLabelMlp,
}

impl WorkloadKind {
    pub fn direction(self) -> MetricDirection {
        match self {
            WorkloadKind::LinearRegression => MetricDirection::Maximize,
            _ => MetricDirection::Minimize,
        }
    }

    fn build(self, seed: u64) -> Box<dyn Problem> {
        match self {
            WorkloadKind::QuadraticBowl => Box::new(Bowl::new(seed)),
            WorkloadKind::LinearRegression => Box::new(LinReg::new(seed)),
            WorkloadKind::LogisticRegression => Box::new(Classifier::logreg(seed)),
            WorkloadKind::MoonsMlp => Box::new(Classifier::moons(seed, Activation::Relu)),
            WorkloadKind::MoonsMlpTanh => Box::new(Classifier::moons(seed, Activation::Tanh)),
            WorkloadKind::Softmax10 => Box::new(Classifier::softmax10(seed)),
            WorkloadKind::MatrixFactorization => Box::new(MatFact::new(seed)),
            WorkloadKind::NoisyLabelMlp => Box::new(Classifier::noisy_mlp(seed)),
        }
    }
}

/// A trainable task with a step budget and a validation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub id: String,
    pub kind: WorkloadKind,
    pub total_steps: u64,
    pub target: f64,
    pub metric_direction: MetricDirection,
    pub eval_interval: u64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(',') {
            return Err(Error::InvalidArgument(format!("bad workload id {:?}", self.id)));
        }
        if self.total_steps == 0 || self.eval_interval == 0 || !self.total_steps.is_multiple_of(self.eval_interval) {
            return Err(Error::InvalidArgument(format!(
                "workload {}: eval interval {} must divide {} total steps",
                self.id, self.eval_interval, self.total_steps
            )));
        }
        if self.target.is_nan() {
            return Err(Error::InvalidArgument(format!("workload {}: target is NaN", self.id)));
        }
        Ok(())
    }

    pub fn info(&self) -> WorkloadInfo {
        WorkloadInfo {
            id: self.id.clone(),
            budget: self.total_steps,
        }
    }

    /// Copy whose target every evaluation meets.
    pub fn with_vacuous_target(&self) -> WorkloadSpec {
        let target = match self.metric_direction {
            MetricDirection::Minimize => f64::INFINITY,
            MetricDirection::Maximize => f64::NEG_INFINITY,
        };
        WorkloadSpec { target, ..self.clone() }
    }
}

fn spec(id: &str, kind: WorkloadKind, total_steps: u64, eval_interval: u64, target: f64, seed: u64) -> WorkloadSpec {
    WorkloadSpec {
        id: id.to_string(),
        kind,
        total_steps,
        target,
        metric_direction: kind.direction(),
        eval_interval,
        seed,
    }
}

/// The eight bundled workloads with targets calibrated at
/// [`DEFAULT_QUANTILE`] on the 200-point default sample (seed 0).
pub fn builtin_workloads() -> Vec<WorkloadSpec> {
    use WorkloadKind::*;
    vec![
        spec("bowl", QuadraticBowl, 500, 10, 1.108870761146858, 11),
        spec("linreg", LinearRegression, 800, 40, 0.20560095566596726, 12),
        spec("logreg", LogisticRegression, 600, 30, 0.3629180410014492, 13),
        spec("moons_mlp", MoonsMlp, 600, 30, 0.3199872032837894, 14),
        spec("softmax10", Softmax10, 600, 30, 1.0810235425877883, 15),
        spec("matfact", MatrixFactorization, 800, 40, 1.160388292200355, 16),
        spec("noisy_mlp", NoisyLabelMlp, 600, 30, 0.5932351931893034, 17),
        spec("moons_tanh", MoonsMlpTanh, 600, 30, 0.3057678785719907, 14),
    ]
}

/// Outcome of training one point on one workload.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point_id: PointId,
    pub workload_id: String,
    pub first_target_step: TargetStep,
    /// Best evaluated metric; the initial metric if no evaluation ran.
    pub best_metric: f64,
    pub metric_history: Vec<(u64, f64)>,
    pub budget: u64,
    pub diverged: bool,
}

impl TrialRecord {
    pub fn to_record_line(&self) -> RecordLine {
        RecordLine {
            point_id: self.point_id,
            workload_id: self.workload_id.clone(),
            budget: self.budget,
            first_target_step: self.first_target_step,
            best_metric: self.best_metric,
        }
    }

    /// The record as it would read under a smaller budget `b`.
    pub fn truncate(&self, b: u64) -> TrialRecord {
        let first_target_step = match self.first_target_step {
            TargetStep::At(s) if s <= b => TargetStep::At(s),
            _ => TargetStep::Never,
        };
        let metric_history: Vec<(u64, f64)> = self.metric_history.iter().copied().filter(|&(s, _)| s <= b).collect();
        TrialRecord {
            first_target_step,
            metric_history,
            budget: b.min(self.budget),
            ..self.clone()
        }
    }
}

/// Trains `point` on `workload` with the workload's own seed.
pub fn run_trial(workload: &WorkloadSpec, point: &HyperparameterPoint) -> Result<TrialRecord> {
    run_trial_repeat(workload, point, 0)
}

/// Like [`run_trial`], with initialisation, minibatch and dropout streams
/// derived from `repeat`. Repeat 0 is [`run_trial`]. The dataset is fixed by
/// the workload seed.
pub fn run_trial_repeat(workload: &WorkloadSpec, point: &HyperparameterPoint, repeat: u64) -> Result<TrialRecord> {
    workload.validate()?;
    point.validate()?;
    let problem = workload.kind.build(workload.seed);
    let schedule = ScheduleSpec::new(point.base_lr, point.warmup_fraction, workload.total_steps)?;
    let cfg = NadamwConfig::new(point.beta1, point.beta2, point.weight_decay);
    let stream = seeds::derive(workload.seed, "trial", repeat);
    let mut params = problem.init(&mut seeds::rng(stream, "init", 0));
    let mut ctx = StepCtx {
        rng: seeds::rng(stream, "batches", 0),
        label_smoothing: point.label_smoothing,
        dropout: point.dropout,
    };
    let mut state = OptimizerState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let direction = workload.metric_direction;
    let initial_metric = problem.metric(&params);

    let mut history = Vec::with_capacity((workload.total_steps / workload.eval_interval) as usize);
    let mut first = TargetStep::Never;
    let mut diverged = false;
    let mut initial_loss = None;
    for step in 0..workload.total_steps {
        let loss = problem.loss_grad(&params, &mut grad, &mut ctx);
        let reference = *initial_loss.get_or_insert(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * reference.abs() {
            diverged = true;
            break;
        }
        let lr = schedule.lr(step)?;
        if nadamw_step(&mut params, &grad, &mut state, lr, &cfg).is_err() {
            diverged = true;
            break;
        }
        let done = step + 1;
        if done % workload.eval_interval == 0 {
            let m = problem.metric(&params);
            if !m.is_finite() {
                diverged = true;
                break;
            }
            history.push((done, m));
            if first == TargetStep::Never && direction.meets(m, workload.target) {
                first = TargetStep::At(done);
            }
        }
    }
    if diverged {
        first = TargetStep::Never;
    }
    let best_metric = direction
        .best(history.iter().map(|&(_, m)| m))
        .unwrap_or(initial_metric);
    Ok(TrialRecord {
        point_id: point.id,
        workload_id: workload.id.clone(),
        first_target_step: first,
        best_metric,
        metric_history: history,
        budget: workload.total_steps,
        diverged,
    })
}

/// Runs every (point, workload) pair in parallel. Output is point-major in
/// input order.
pub fn run_grid(workloads: &[WorkloadSpec], points: &[HyperparameterPoint]) -> Result<Vec<TrialRecord>> {
    let pairs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..workloads.len()).map(move |w| (p, w)))
        .collect();
    pairs
        .par_iter()
        .map(|&(p, w)| run_trial(&workloads[w], &points[p]))
        .collect()
}

/// Assembles grid output into a trial matrix.
pub fn matrix_from_trials(
    workloads: &[WorkloadSpec],
    points: Vec<HyperparameterPoint>,
    trials: &[TrialRecord],
) -> Result<TrialMatrix> {
    let lines: Vec<RecordLine> = trials.iter().map(TrialRecord::to_record_line).collect();
    let m = TrialMatrix::from_records(&lines, points)?;
    // from_records orders workloads by first appearance; keep the spec order.
    debug_assert!(m.workloads().iter().zip(workloads).all(|(a, b)| a.id == b.id));
    Ok(m)
}

/// Per-workload outcome of [`calibrate_targets`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub workload: String,
    pub target: f64,
    pub successes: usize,
    pub diverged: usize,
    pub points: usize,
}

/// Sets each workload's target so that `ceil(quantile * points)` points meet
/// it (more on ties). Diverged trials never count as successes, so the
/// quantile is taken over the best metrics of the others.
pub fn calibrate_targets(
    workloads: &[WorkloadSpec],
    points: &[HyperparameterPoint],
    quantile: f64,
) -> Result<(Vec<WorkloadSpec>, Vec<CalibrationRow>)> {
    if points.len() < MIN_CALIBRATION_POINTS {
        return Err(Error::InvalidArgument(format!(
            "calibration needs at least {MIN_CALIBRATION_POINTS} points, got {}",
            points.len()
        )));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {quantile} outside (0, 1]")));
    }
    let vacuous: Vec<WorkloadSpec> = workloads.iter().map(WorkloadSpec::with_vacuous_target).collect();
    let trials = run_grid(&vacuous, points)?;
    let mut specs = Vec::with_capacity(workloads.len());
    let mut report = Vec::with_capacity(workloads.len());
    for (w, spec) in workloads.iter().enumerate() {
        let dir = spec.metric_direction;
        let column: Vec<&TrialRecord> = trials.iter().skip(w).step_by(workloads.len()).collect();
        let mut bests: Vec<f64> = column.iter().filter(|t| !t.diverged).map(|t| t.best_metric).collect();
        if bests.is_empty() {
            return Err(Error::AllDiverged(spec.id.clone()));
        }
        bests.sort_by(|a, b| {
            if dir.better(*a, *b) {
                std::cmp::Ordering::Less
            } else if dir.better(*b, *a) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        let k = ((quantile * points.len() as f64).ceil() as usize).clamp(1, bests.len());
        let target = bests[k - 1];
        let successes = column
            .iter()
            .filter(|t| !t.diverged && dir.meets(t.best_metric, target))
            .count();
        report.push(CalibrationRow {
            workload: spec.id.clone(),
            target,
            successes,
            diverged: column.iter().filter(|t| t.diverged).count(),
            points: points.len(),
        });
        specs.push(WorkloadSpec {
            target,
            ..spec.clone()
        });
    }
    Ok((specs, report))
}

/// Writes `step,metric` rows for one trial.
pub fn write_history<W: Write>(mut out: W, record: &TrialRecord) -> std::io::Result<()> {
    writeln!(out, "step,metric")?;
    for (s, m) in &record.metric_history {
        writeln!(out, "{s},{m:?}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpspace::{default_space, sample};

    fn pilot() -> HyperparameterPoint {
        HyperparameterPoint {
            id: PointId(9999),
            base_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            warmup_fraction: 0.05,
            weight_decay: 0.0,
            label_smoothing: 0.0,
            dropout: 0.0,
        }
    }

    #[test]
    fn builtin_ids_are_distinct_and_intervals_divide() {
        let ws = builtin_workloads();
        assert_eq!(ws.len(), 8);
        let mut ids: Vec<&str> = ws.iter().map(|w| w.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 8);
        for w in &ws {
            assert_eq!(w.total_steps % w.eval_interval, 0);
            w.validate().unwrap();
        }
    }

    #[test]
    fn vacuous_target_is_met_at_first_eval() {
        let p = &sample(&default_space(), 3, 1).unwrap()[2];
        for w in builtin_workloads() {
            let r = run_trial(&w.with_vacuous_target(), p).unwrap();
            if !r.diverged {
                assert_eq!(r.first_target_step, TargetStep::At(w.eval_interval), "{}", w.id);
            }
        }
    }

    #[test]
    fn trials_are_bit_reproducible() {
        let p = &sample(&default_space(), 5, 3).unwrap()[4];
        for w in builtin_workloads() {
            let a = run_trial(&w, p).unwrap();
            let b = run_trial(&w, p).unwrap();
            assert_eq!(a.first_target_step, b.first_target_step);
            assert_eq!(a.best_metric.to_bits(), b.best_metric.to_bits());
            let bits = |r: &TrialRecord| r.metric_history.iter().map(|(s, m)| (*s, m.to_bits())).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn first_target_step_is_first_meeting_eval() {
        let points = sample(&default_space(), 10, 5).unwrap();
        for w in builtin_workloads() {
            for p in &points {
                let r = run_trial(&w, p).unwrap();
                match r.first_target_step {
                    TargetStep::At(s) => {
                        assert!(s <= r.budget && !r.diverged);
                        for &(step, m) in r.metric_history.iter().take_while(|&&(step, _)| step <= s) {
                            assert_eq!(w.metric_direction.meets(m, w.target), step == s, "{} at {step}", w.id);
                        }
                    }
                    TargetStep::Never => {
                        if !r.diverged {
                            assert!(r.metric_history.iter().all(|&(_, m)| !w.metric_direction.meets(m, w.target)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_below_first_target_is_never() {
        let w = builtin_workloads().remove(0).with_vacuous_target();
        let r = run_trial(&w, &pilot()).unwrap();
        assert_eq!(r.first_target_step, TargetStep::At(w.eval_interval));
        assert_eq!(r.truncate(w.eval_interval - 1).first_target_step, TargetStep::Never);
        assert_eq!(r.truncate(w.eval_interval).first_target_step, TargetStep::At(w.eval_interval));
    }

    #[test]
    fn pilot_point_reaches_the_bowl_target() {
        let bowl = &builtin_workloads()[0];
        let r = run_trial(bowl, &pilot()).unwrap();
        assert!(r.first_target_step.is_reached(), "{r:?}");
    }

    #[test]
    fn top_of_range_learning_rate_diverges_on_the_bowl() {
        let bowl = &builtin_workloads()[0];
        let p = HyperparameterPoint { base_lr: 1e-2, ..pilot() };
        let r = run_trial(bowl, &p).unwrap();
        assert!(r.diverged);
        assert_eq!(r.first_target_step, TargetStep::Never);
    }

    #[test]
    fn bowl_final_loss_is_near_the_minimum_when_converging() {
        let bowl = builtin_workloads().remove(0);
        for p in sample(&default_space(), 64, 2).unwrap() {
            let r = run_trial(&bowl, &p).unwrap();
            if !r.diverged {
                let last = r.metric_history.last().unwrap().1;
                assert!(last <= 10.0 * Bowl::FLOOR, "point {}: {last}", p.id);
            }
        }
    }

    #[test]
    fn calibration_with_full_quantile_admits_every_point() {
        let ws: Vec<WorkloadSpec> = builtin_workloads().into_iter().skip(1).take(2).collect();
        let points = sample(&default_space(), 20, 4).unwrap();
        let (specs, report) = calibrate_targets(&ws, &points, 1.0).unwrap();
        for (spec, row) in specs.iter().zip(&report) {
            assert_eq!(row.successes + row.diverged, 20);
            for p in &points {
                let r = run_trial(spec, p).unwrap();
                assert_eq!(r.first_target_step.is_reached(), !r.diverged);
            }
        }
        assert!(calibrate_targets(&ws, &points[..19], 0.1).is_err());
        assert!(calibrate_targets(&ws, &points, 0.0).is_err());
    }

    #[test]
    fn repeats_change_the_stream_but_not_the_data() {
        let w = &builtin_workloads()[3];
        let p = &sample(&default_space(), 2, 0).unwrap()[1];
        let a = run_trial_repeat(w, p, 0).unwrap();
        let b = run_trial_repeat(w, p, 1).unwrap();
        assert_eq!(a, run_trial(w, p).unwrap());
        assert_ne!(a.metric_history, b.metric_history);
    }
}
