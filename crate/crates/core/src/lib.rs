//! Ordered hyperparameter lists for NAdamW.
//!
//! The pipeline: draw candidate points from a search space ([`hpspace`]),
//! train each on a set of workloads and record the first step that meets the
//! validation target ([`workbench`], [`trialstore`]), score lists of points by
//! a penalised geometric mean of step fractions ([`scoring`]), build ordered
//! lists greedily and validate them leave-one-workload-out ([`listbuild`]),
//! and compare against random-search tuning curves ([`evalkit`]).
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for common use.

pub mod error;
pub mod evalkit;
pub mod hpspace;
pub mod listbuild;
pub mod nadamw;
pub mod scalar;
pub mod scoring;
pub mod seeds;
pub mod trialstore;
pub mod workbench;

pub use error::{Error, Result};
pub use hpspace::{HyperparameterPoint, PointId, SearchSpace};
pub use scalar::Scalar;
pub use trialstore::{MetricDirection, TargetStep, TrialMatrix};

pub type OptimizerState64 = nadamw::OptimizerState<f64>;
pub type OptimizerState32 = nadamw::OptimizerState<f32>;
pub type NadamwConfig64 = nadamw::NadamwConfig<f64>;
pub type NadamwConfig32 = nadamw::NadamwConfig<f32>;
pub type ScheduleSpec64 = nadamw::ScheduleSpec<f64>;
pub type ScheduleSpec32 = nadamw::ScheduleSpec<f32>;
pub type CostParams64 = scoring::CostParams<f64>;
pub type CostParams32 = scoring::CostParams<f32>;
pub type OrderedList64 = listbuild::OrderedList<f64>;
pub type TuningCurve64 = evalkit::TuningCurve<f64>;
