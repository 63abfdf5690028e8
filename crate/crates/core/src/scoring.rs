//! Step fractions and the penalised geometric-mean list cost.
//!
//! For a list `L`, each workload's time `t_i` is the earliest first-target step
//! over the listed points. The cost is the geometric mean over workloads of
//! `min(t_i / T_i, tau)`, with unreached targets scored at `tau`.

use crate::error::{Error, Result};
use crate::hpspace::PointId;
use crate::scalar::Scalar;
use crate::trialstore::{TargetStep, TrialMatrix};

/// Penalty factor applied to workloads whose target is never reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams<T> {
    tau: T,
}

pub const DEFAULT_TAU: f64 = 2.0;

/// Relative gap within which two list costs count as tied. Costs are
/// accumulated in log space, so mathematically equal costs of different
/// lists can differ in the last bits.
pub const TIE_RTOL: f64 = 1e-12;

/// True when `a` and `b` are equal up to [`TIE_RTOL`].
pub fn costs_tie<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(TIE_RTOL) * a.abs().max(b.abs())
}

impl<T: Scalar> CostParams<T> {
    /// `tau` must exceed 1.
    pub fn new(tau: T) -> Result<Self> {
        if tau > T::one() && tau.is_finite() {
            Ok(Self { tau })
        } else {
            Err(Error::InvalidArgument(format!(
                "penalty factor must be finite and greater than 1, got {tau}"
            )))
        }
    }

    /// Like [`CostParams::new`] but also admits `tau = 1`, which only the
    /// penalty ablation uses.
    pub fn for_ablation(tau: T) -> Result<Self> {
        if tau >= T::one() && tau.is_finite() {
            Ok(Self { tau })
        } else {
            Err(Error::InvalidArgument(format!(
                "penalty factor must be finite and at least 1, got {tau}"
            )))
        }
    }

    pub fn tau(&self) -> T {
        self.tau
    }
}

impl<T: Scalar> Default for CostParams<T> {
    fn default() -> Self {
        Self {
            tau: T::lit(DEFAULT_TAU),
        }
    }
}

/// Earliest first-target step per workload over the listed points.
pub fn best_time_per_workload(matrix: &TrialMatrix, list: &[PointId]) -> Result<Vec<TargetStep>> {
    let rows: Vec<usize> = list
        .iter()
        .map(|&id| matrix.point_index(id))
        .collect::<Result<_>>()?;
    Ok((0..matrix.num_workloads())
        .map(|w| {
            rows.iter()
                .map(|&p| matrix.cell(p, w).first_target_step)
                .min()
                .unwrap_or(TargetStep::Never)
        })
        .collect())
}

/// `min(t / budget, tau)`, or `tau` when the target was never reached.
pub fn step_fraction<T: Scalar>(t: TargetStep, budget: u64, tau: T) -> Result<T> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    match t {
        TargetStep::Never => Ok(tau),
        TargetStep::At(0) => Err(Error::InvalidArgument(
            "first target step 0 is impossible; targets are checked after an evaluation".into(),
        )),
        TargetStep::At(s) => {
            let f = |x: u64| T::from_u64(x).expect("step representable");
            Ok((f(s) / f(budget)).min(tau))
        }
    }
}

/// Geometric mean of per-workload step fractions, accumulated in log space.
pub(crate) fn cost_of_times<T: Scalar>(
    times: &[TargetStep],
    budgets: impl Iterator<Item = u64>,
    tau: T,
) -> T {
    let mut log_sum = T::zero();
    let mut n = 0usize;
    for (&t, b) in times.iter().zip(budgets) {
        let frac = step_fraction(t, b, tau).expect("matrix cells are validated");
        log_sum = log_sum + frac.ln();
        n += 1;
    }
    (log_sum / T::from_count(n)).exp()
}

/// Cost of `list` on `matrix`. An empty list costs exactly `tau`.
pub fn list_cost<T: Scalar>(matrix: &TrialMatrix, list: &[PointId], params: &CostParams<T>) -> Result<T> {
    if list.is_empty() {
        return Ok(params.tau());
    }
    let times = best_time_per_workload(matrix, list)?;
    Ok(cost_of_times(
        &times,
        matrix.workloads().iter().map(|w| w.budget),
        params.tau(),
    ))
}
