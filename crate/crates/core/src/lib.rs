//! Calibration toolkit for probabilistic stress-life (S-N) models with a
//! fatigue limit.

pub mod curves;
pub mod data;
pub mod dist;
pub mod inference;
pub mod likelihood;
pub mod mle;
pub mod stress;
pub mod synth;

pub use curves::{
    kernel_at, probability_plot, quantile_curve, survival_curve, CurveError, LifeScale,
    ProbabilityPlot, QuantileCurve, SurvivalCurve,
};
pub use data::{ColumnMap, DataError, FatigueDataset, FatigueObservation};
pub use dist::{BirnbaumSaundersKernel, DistError, Kernel, NormalKernel, SinhNormalKernel};
pub use inference::{
    bootstrap_ci, profile_fatigue_limit, BootstrapSummary, IcReport, ParamInterval, ProfileCurve,
    ProfilePoint,
};
pub use likelihood::{
    Family, LogBase, LogLik, ModelDataError, ModelName, ModelSpec, ParamVector, ScaleModel,
    ScaleParams,
};
pub use mle::{fit, Bounds, FitConfig, FitError, FittedModel};
pub use stress::{StressError, StressTransform, TransformKind};
pub use synth::{simulate_dataset, LoadingPoint, SynthError};
