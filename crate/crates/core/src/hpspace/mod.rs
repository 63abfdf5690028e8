//! The NAdamW search space and quasi-random sampling from it.

mod io;
pub mod sobol;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use sobol::ScrambledSobol;

pub use io::{parse_space, read_points, space_to_string, write_points, POINTS_HEADER};

/// Stable identifier of a hyperparameter point within a sample.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PointId(pub u32);

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Log,
    Linear,
}

/// A closed real interval with the scale it is searched on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl Interval {
    pub const fn log(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            scale: Scale::Log,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Maps a unit-interval coordinate onto the interval.
    pub fn map(&self, u: f64) -> f64 {
        let x = match self.scale {
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
            Scale::Linear => self.lo + u * (self.hi - self.lo),
        };
        x.clamp(self.lo, self.hi)
    }

    /// Inverse of [`Interval::map`].
    pub fn unmap(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Log => (x.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
            Scale::Linear => (x - self.lo) / (self.hi - self.lo),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::InvalidSpace(format!("{name}: bounds must be finite")));
        }
        if self.lo >= self.hi {
            return Err(Error::InvalidSpace(format!(
                "{name}: lower bound {} must be below upper bound {}",
                self.lo, self.hi
            )));
        }
        if self.scale == Scale::Log && self.lo <= 0.0 {
            return Err(Error::InvalidSpace(format!(
                "{name}: log scale needs a positive lower bound, got {}",
                self.lo
            )));
        }
        Ok(())
    }
}

/// Picks the choice whose equal-width cell of the unit interval contains `u`.
fn pick(choices: &[f64], u: f64) -> f64 {
    let k = choices.len();
    let idx = ((u * k as f64) as usize).min(k - 1);
    choices[idx]
}

/// The search space for one NAdamW configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub base_lr: Interval,
    pub one_minus_beta1: Interval,
    pub one_minus_beta2: Interval,
    pub warmup_fraction: Vec<f64>,
    pub weight_decay: Interval,
    pub label_smoothing: Vec<f64>,
    pub dropout: Vec<f64>,
}

/// The broad space every list in this toolkit is drawn from.
pub fn default_space() -> SearchSpace {
    SearchSpace {
        base_lr: Interval::log(1e-4, 1e-2),
        one_minus_beta1: Interval::log(1e-3, 0.2),
        one_minus_beta2: Interval::log(1e-3, 0.2),
        warmup_fraction: vec![0.02, 0.05, 0.10],
        weight_decay: Interval::log(1e-4, 0.5),
        label_smoothing: vec![0.0, 0.1, 0.2],
        dropout: vec![0.0, 0.1],
    }
}

fn validate_choices(name: &str, choices: &[f64], open_low: bool) -> Result<()> {
    if choices.is_empty() {
        return Err(Error::InvalidSpace(format!("{name}: no choices")));
    }
    for (i, &c) in choices.iter().enumerate() {
        let ok = if open_low {
            c > 0.0 && c < 1.0
        } else {
            (0.0..1.0).contains(&c)
        };
        if !ok {
            return Err(Error::InvalidSpace(format!("{name}: choice {c} out of range")));
        }
        if choices[..i].contains(&c) {
            return Err(Error::InvalidSpace(format!("{name}: duplicate choice {c}")));
        }
    }
    Ok(())
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.base_lr.validate("base_lr")?;
        self.one_minus_beta1.validate("one_minus_beta1")?;
        self.one_minus_beta2.validate("one_minus_beta2")?;
        self.weight_decay.validate("weight_decay")?;
        for (name, iv) in [
            ("one_minus_beta1", &self.one_minus_beta1),
            ("one_minus_beta2", &self.one_minus_beta2),
        ] {
            if iv.lo <= 0.0 || iv.hi >= 1.0 {
                return Err(Error::InvalidSpace(format!(
                    "{name}: must lie strictly inside (0, 1)"
                )));
            }
        }
        if self.base_lr.lo <= 0.0 {
            return Err(Error::InvalidSpace("base_lr: must be positive".into()));
        }
        if self.weight_decay.lo < 0.0 {
            return Err(Error::InvalidSpace("weight_decay: must be non-negative".into()));
        }
        validate_choices("warmup_fraction", &self.warmup_fraction, true)?;
        validate_choices("label_smoothing", &self.label_smoothing, false)?;
        validate_choices("dropout", &self.dropout, false)?;
        Ok(())
    }

    /// Whether `p` lies inside every range and choice set of this space.
    pub fn contains(&self, p: &HyperparameterPoint) -> bool {
        self.base_lr.contains(p.base_lr)
            && self.one_minus_beta1.contains(1.0 - p.beta1)
            && self.one_minus_beta2.contains(1.0 - p.beta2)
            && self.weight_decay.contains(p.weight_decay)
            && self.warmup_fraction.contains(&p.warmup_fraction)
            && self.label_smoothing.contains(&p.label_smoothing)
            && self.dropout.contains(&p.dropout)
    }
}

/// One NAdamW configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterPoint {
    pub id: PointId,
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub dropout: f64,
}

impl HyperparameterPoint {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidArgument(format!(
                "point {}: {what} out of range",
                self.id
            )))
        };
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return bad("beta1");
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta2");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout");
        }
        Ok(())
    }
}

// Sobol dimension assignment. Continuous dimensions take the leading
// (best-distributed) coordinates; each discrete dimension consumes one more.
const DIM_LR: usize = 0;
const DIM_B1: usize = 1;
const DIM_B2: usize = 2;
const DIM_WD: usize = 3;
const DIM_WARMUP: usize = 4;
const DIM_SMOOTHING: usize = 5;
const DIM_DROPOUT: usize = 6;
const SAMPLE_DIMS: usize = 7;

/// Draws `count` quasi-random points from `space`. Point ids are `0..count`.
pub fn sample(space: &SearchSpace, count: usize, seed: u64) -> Result<Vec<HyperparameterPoint>> {
    space.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let count = u32::try_from(count)
        .map_err(|_| Error::InvalidArgument(format!("sample count {count} too large")))?;
    let seq = ScrambledSobol::new(SAMPLE_DIMS, seed);
    Ok((0..count)
        .map(|i| {
            let u = seq.point(i);
            HyperparameterPoint {
                id: PointId(i),
                base_lr: space.base_lr.map(u[DIM_LR]),
                beta1: 1.0 - space.one_minus_beta1.map(u[DIM_B1]),
                beta2: 1.0 - space.one_minus_beta2.map(u[DIM_B2]),
                warmup_fraction: pick(&space.warmup_fraction, u[DIM_WARMUP]),
                weight_decay: space.weight_decay.map(u[DIM_WD]),
                label_smoothing: pick(&space.label_smoothing, u[DIM_SMOOTHING]),
                dropout: pick(&space.dropout, u[DIM_DROPOUT]),
            }
        })
        .collect())
}
