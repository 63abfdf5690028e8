//! NAdamW: Adam with Nesterov momentum, bias correction and decoupled weight
//! decay, plus the linear-warmup/cosine-to-zero schedule and label smoothing.
//!
//! The update follows the Optax composition
//! `scale_by_adam(nesterov) -> add_decayed_weights -> scale_by_learning_rate`,
//! so weight decay is multiplied by the *scheduled* learning rate and bypasses
//! the adaptive denominator.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Epsilon added to the root of the second moment.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Per-parameter moment estimates. `step` counts completed updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// The non-scheduled NAdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamwConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Scalar> NadamwConfig<T> {
    pub fn new(beta1: T, beta2: T, weight_decay: T) -> Self {
        Self {
            beta1,
            beta2,
            eps: T::lit(DEFAULT_EPS),
            weight_decay,
        }
    }
}

fn powi<T: Scalar>(base: T, exp: u64) -> T {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => T::zero(),
    }
}

/// In-place NAdamW update. Nothing is modified if an error is returned.
pub fn nadamw_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut OptimizerState<T>,
    lr: T,
    cfg: &NadamwConfig<T>,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch {
            params: n,
            grads: grads.len(),
            state: state.m.len().min(state.v.len()),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }

    let one = T::one();
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let t = state.step + 1;
    // Nesterov look-ahead: the momentum term is corrected with t+1, the
    // fresh-gradient term with t.
    let c_mom = b1 / (one - powi(b1, t + 1));
    let c_grad = (one - b1) / (one - powi(b1, t));
    let c_var = one / (one - powi(b2, t));

    for i in 0..n {
        let g = grads[i];
        let m = b1 * state.m[i] + (one - b1) * g;
        let v = b2 * state.v[i] + (one - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let dir = (c_mom * m + c_grad * g) / ((v * c_var).sqrt() + cfg.eps);
        params[i] = params[i] - lr * dir - lr * cfg.weight_decay * params[i];
    }
    state.step = t;
    Ok(())
}

/// State-in/state-out NAdamW update.
pub fn nadamw_update<T: Scalar>(
    params: &[T],
    grads: &[T],
    state: &OptimizerState<T>,
    lr: T,
    cfg: &NadamwConfig<T>,
) -> Result<(Vec<T>, OptimizerState<T>)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    nadamw_step(&mut p, grads, &mut s, lr, cfg)?;
    Ok((p, s))
}

/// Linear warmup from zero to `base_lr`, then cosine decay to zero at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec<T> {
    pub base_lr: T,
    pub warmup_fraction: T,
    pub total_steps: u64,
}

impl<T: Scalar> ScheduleSpec<T> {
    pub fn new(base_lr: T, warmup_fraction: T, total_steps: u64) -> Result<Self> {
        let spec = Self {
            base_lr,
            warmup_fraction,
            total_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `round(warmup_fraction * total_steps)`, at least 1.
    pub fn warmup_steps(&self) -> u64 {
        let w = (self.warmup_fraction * T::from_u64(self.total_steps).unwrap_or_else(T::max_value))
            .round()
            .to_u64()
            .unwrap_or(0);
        w.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > T::zero() && self.base_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "base learning rate must be positive, got {}",
                self.base_lr
            )));
        }
        if !(self.warmup_fraction > T::zero() && self.warmup_fraction < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "warmup fraction must lie in (0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.warmup_steps() >= self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "{} warmup steps leave no decay phase in {} total steps",
                self.warmup_steps(),
                self.total_steps
            )));
        }
        Ok(())
    }

    /// Learning rate applied at update number `step` (0-based).
    pub fn lr(&self, step: u64) -> Result<T> {
        if step > self.total_steps {
            return Err(Error::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        let warmup = self.warmup_steps();
        let f = |x: u64| T::from_u64(x).expect("step count representable");
        if step < warmup {
            return Ok(self.base_lr * f(step) / f(warmup));
        }
        let progress = f(step - warmup) / f(self.total_steps - warmup);
        let half = T::lit(0.5);
        let lr = self.base_lr * half * (T::one() + (T::PI() * progress).cos());
        // cos(pi) is not exactly -1 in floating point; pin the endpoint.
        Ok(if step == self.total_steps { T::zero() } else { lr.max(T::zero()) })
    }
}

pub fn schedule_lr<T: Scalar>(spec: &ScheduleSpec<T>, step: u64) -> Result<T> {
    spec.lr(step)
}

/// Dumps the full schedule as `step,lr` rows.
pub fn write_schedule<T: Scalar, W: Write>(mut out: W, spec: &ScheduleSpec<T>) -> io::Result<()> {
    writeln!(out, "step,lr")?;
    for step in 0..=spec.total_steps {
        let lr = spec.lr(step).map_err(io::Error::other)?;
        writeln!(out, "{step},{lr}")?;
    }
    Ok(())
}

/// Mixes a one-hot target with the uniform distribution:
/// `(1 - smoothing) * onehot + smoothing / classes`.
pub fn smooth_labels<T: Scalar>(onehot: &[T], smoothing: T) -> Result<Vec<T>> {
    if !(smoothing >= T::zero() && smoothing < T::one()) {
        return Err(Error::InvalidSmoothing(smoothing.to_f64().unwrap_or(f64::NAN)));
    }
    let ones = onehot.iter().filter(|&&x| x == T::one()).count();
    let zeros = onehot.iter().filter(|&&x| x == T::zero()).count();
    if ones != 1 || ones + zeros != onehot.len() {
        return Err(Error::InvalidArgument(
            "label vector must be one-hot".into(),
        ));
    }
    let uniform = smoothing / T::from_count(onehot.len());
    Ok(onehot
        .iter()
        .map(|&y| (T::one() - smoothing) * y + uniform)
        .collect())
}
