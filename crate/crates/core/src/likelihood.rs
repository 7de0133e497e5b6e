//! Model specification and the censored log-likelihood.
//!
//! A model is the combination of a distribution family for transformed life,
//! a scale model (constant or log-linear in stress), an equivalent-stress
//! transform, and the logarithm base used for the life and stress logs.
//! Six named variants cover the three families crossed with the two scale
//! models:
//!
//! | name | family                    | scale      |
//! |------|---------------------------|------------|
//! | Ia   | normal on log-life        | constant   |
//! | Ib   | normal on log-life        | log-linear |
//! | IIa  | sinh-normal on ln-life    | constant   |
//! | IIb  | sinh-normal on ln-life    | log-linear |
//! | IIIa | Birnbaum-Saunders on log  | constant   |
//! | IIIb | Birnbaum-Saunders on log  | log-linear |
//!
//! Each observation contributes to the log-likelihood as
//!
//! - failure at `N` cycles: log density of `N`, i.e. the kernel log-density
//!   of `y = log(N)` plus the Jacobian `-ln N - ln(ln base)`;
//! - run-out at `N` cycles: log survival of `y` (the specimen outlived `N`);
//! - loading at or below the fatigue limit `A3`: a run-out contributes 0
//!   (infinite life was predicted and observed), while a failure makes the
//!   parameter vector infeasible, since the model gives that outcome
//!   probability zero.
//!
//! The infeasible case is a value, not an error: the optimizer relies on
//! probing infeasible regions cheaply.

use crate::data::{FatigueDataset, FatigueObservation};
use crate::dist::{BirnbaumSaundersKernel, NormalKernel, SinhNormalKernel};
use crate::stress::{StressError, StressTransform, TransformKind};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Distribution family for the transformed life.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `log_b N` is normal.
    NormalOnLog,
    /// `ln N` is sinh-normal; equivalently `N` is Birnbaum-Saunders.
    SinhNormalOnLn,
    /// `log_b N` is Birnbaum-Saunders.
    BirnbaumSaundersOnLog,
}

/// How the kernel scale parameter depends on equivalent stress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleModel {
    /// One scale value for all stress levels.
    Constant,
    /// `scale(s) = base^(B1 + B2 log_b s)`, log-linear in stress.
    LogLinear,
}

/// Base of the logarithms in the life transform and the stress-response
/// relation. The sinh-normal family always works on natural-log life, but
/// its location and scale relations still follow this base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogBase {
    #[serde(rename = "10")]
    Ten,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    pub fn ln(self) -> f64 {
        match self {
            LogBase::Ten => std::f64::consts::LN_10,
            LogBase::E => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogBase::Ten => "10",
            LogBase::E => "e",
        }
    }
}

/// The six named model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelName {
    Ia,
    Ib,
    IIa,
    IIb,
    IIIa,
    IIIb,
}

impl ModelName {
    pub const ALL: [ModelName; 6] = [
        ModelName::Ia,
        ModelName::Ib,
        ModelName::IIa,
        ModelName::IIb,
        ModelName::IIIa,
        ModelName::IIIb,
    ];

    pub fn family(self) -> Family {
        match self {
            ModelName::Ia | ModelName::Ib => Family::NormalOnLog,
            ModelName::IIa | ModelName::IIb => Family::SinhNormalOnLn,
            ModelName::IIIa | ModelName::IIIb => Family::BirnbaumSaundersOnLog,
        }
    }

    pub fn scale_model(self) -> ScaleModel {
        match self {
            ModelName::Ia | ModelName::IIa | ModelName::IIIa => ScaleModel::Constant,
            ModelName::Ib | ModelName::IIb | ModelName::IIIb => ScaleModel::LogLinear,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelName::Ia => "Ia",
            ModelName::Ib => "Ib",
            ModelName::IIa => "IIa",
            ModelName::IIb => "IIb",
            ModelName::IIIa => "IIIa",
            ModelName::IIIb => "IIIb",
        }
    }
}

impl std::str::FromStr for ModelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model {s:?}; expected one of Ia, Ib, IIa, IIb, IIIa, IIIb"))
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Complete model specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub scale_model: ScaleModel,
    pub transform: TransformKind,
    pub log_base: LogBase,
}

impl ModelSpec {
    pub fn new(name: ModelName, transform: TransformKind, log_base: LogBase) -> Self {
        Self {
            family: name.family(),
            scale_model: name.scale_model(),
            transform,
            log_base,
        }
    }

    pub fn model_name(&self) -> ModelName {
        match (self.family, self.scale_model) {
            (Family::NormalOnLog, ScaleModel::Constant) => ModelName::Ia,
            (Family::NormalOnLog, ScaleModel::LogLinear) => ModelName::Ib,
            (Family::SinhNormalOnLn, ScaleModel::Constant) => ModelName::IIa,
            (Family::SinhNormalOnLn, ScaleModel::LogLinear) => ModelName::IIb,
            (Family::BirnbaumSaundersOnLog, ScaleModel::Constant) => ModelName::IIIa,
            (Family::BirnbaumSaundersOnLog, ScaleModel::LogLinear) => ModelName::IIIb,
        }
    }

    /// Number of free parameters: A1, A2, A3, plus the transform exponent
    /// when there is one, plus one or two scale parameters.
    pub fn param_count(&self) -> usize {
        let mut k = 3;
        if self.transform.has_exponent() {
            k += 1;
        }
        k += match self.scale_model {
            ScaleModel::Constant => 1,
            ScaleModel::LogLinear => 2,
        };
        k
    }

    /// `ln` of the life-transform base: the sinh-normal family always uses
    /// natural-log life, the other two follow `log_base`.
    pub(crate) fn life_ln(&self) -> f64 {
        match self.family {
            Family::SinhNormalOnLn => 1.0,
            _ => self.log_base.ln(),
        }
    }

    /// Life in cycles to transformed life.
    pub fn life_to_y(&self, n: f64) -> f64 {
        n.ln() / self.life_ln()
    }

    /// Transformed life back to cycles.
    pub fn y_to_life(&self, y: f64) -> f64 {
        (y * self.life_ln()).exp()
    }
}

/// Scale parameters, matching the model's [`ScaleModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleParams {
    Constant(f64),
    LogLinear { b1: f64, b2: f64 },
}

/// Fitted or candidate parameter values.
///
/// `a1`, `a2` shape the stress-life relation, `a3` is the fatigue limit,
/// `q` the equivalent-stress exponent (absent for the identity transform),
/// and `scale` the kernel scale: sigma for the normal family, alpha for the
/// other two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamRepr", try_from = "ParamRepr")]
pub struct ParamVector {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub q: Option<f64>,
    pub scale: ScaleParams,
}

impl ParamVector {
    /// Parameter names and values in canonical order:
    /// `a1, a2, a3, [q], tau_or_alpha | b1, b2`.
    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("a1", self.a1), ("a2", self.a2), ("a3", self.a3)];
        if let Some(q) = self.q {
            out.push(("q", q));
        }
        match self.scale {
            ScaleParams::Constant(t) => out.push(("tau_or_alpha", t)),
            ScaleParams::LogLinear { b1, b2 } => {
                out.push(("b1", b1));
                out.push(("b2", b2));
            }
        }
        out
    }

    /// Whether the vector has the shape the spec calls for.
    pub fn matches(&self, spec: &ModelSpec) -> bool {
        self.q.is_some() == spec.transform.has_exponent()
            && matches!(
                (self.scale, spec.scale_model),
                (ScaleParams::Constant(_), ScaleModel::Constant)
                    | (ScaleParams::LogLinear { .. }, ScaleModel::LogLinear)
            )
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRepr {
    a1: f64,
    a2: f64,
    a3: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tau_or_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    b1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    b2: Option<f64>,
}

impl From<ParamVector> for ParamRepr {
    fn from(p: ParamVector) -> Self {
        let (tau_or_alpha, b1, b2) = match p.scale {
            ScaleParams::Constant(t) => (Some(t), None, None),
            ScaleParams::LogLinear { b1, b2 } => (None, Some(b1), Some(b2)),
        };
        ParamRepr {
            a1: p.a1,
            a2: p.a2,
            a3: p.a3,
            q: p.q,
            tau_or_alpha,
            b1,
            b2,
        }
    }
}

impl TryFrom<ParamRepr> for ParamVector {
    type Error = String;

    fn try_from(r: ParamRepr) -> Result<Self, Self::Error> {
        let scale = match (r.tau_or_alpha, r.b1, r.b2) {
            (Some(t), None, None) => ScaleParams::Constant(t),
            (None, Some(b1), Some(b2)) => ScaleParams::LogLinear { b1, b2 },
            _ => return Err("params need either tau_or_alpha or the pair b1, b2".to_string()),
        };
        Ok(ParamVector {
            a1: r.a1,
            a2: r.a2,
            a3: r.a3,
            q: r.q,
            scale,
        })
    }
}

/// A log-likelihood value or the signal that the parameters assign zero
/// probability to something that was observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLik {
    Finite(f64),
    Infeasible,
}

impl LogLik {
    pub fn finite(self) -> Option<f64> {
        match self {
            LogLik::Finite(v) => Some(v),
            LogLik::Infeasible => None,
        }
    }

    pub fn is_infeasible(self) -> bool {
        matches!(self, LogLik::Infeasible)
    }
}

#[derive(Debug, Error)]
pub enum ModelDataError {
    #[error(transparent)]
    Stress(#[from] StressError),
    #[error("row {row}: cycles must be positive and finite, got {n}")]
    InvalidCycles { row: usize, n: f64 },
    #[error("row {row}: N = {n} cycles has non-positive log-life; the Birnbaum-Saunders family needs N > 1")]
    LifeLogNotPositive { row: usize, n: f64 },
    #[error("parameter vector shape does not match the model (q and scale fields must agree with transform and scale model)")]
    ShapeMismatch,
    #[error("dataset is empty")]
    Empty,
    #[error("dataset has no failures")]
    NoFailures,
}

/// Location of the transformed-life distribution at an equivalent stress,
/// or `None` at or below the fatigue limit. Callers branch on `None`; the
/// below-limit case is an ordinary regime of the model, not a failure.
pub fn location(s_eq: f64, p: &ParamVector, spec: &ModelSpec) -> Option<f64> {
    let gap = s_eq - p.a3;
    if gap <= 0.0 {
        return None;
    }
    Some(p.a1 + p.a2 * gap.ln() / spec.log_base.ln())
}

/// Kernel scale at an equivalent stress. Requires `s_eq > 0` for the
/// log-linear model.
pub fn scale_at(s_eq: f64, p: &ParamVector, spec: &ModelSpec) -> f64 {
    match p.scale {
        ScaleParams::Constant(t) => t,
        ScaleParams::LogLinear { b1, b2 } => {
            // base^(B1 + B2 log_b s) = exp(ln(base) B1 + B2 ln s)
            (spec.log_base.ln() * b1 + b2 * s_eq.ln()).exp()
        }
    }
}

/// Log-likelihood contribution of a single observation. `row` labels errors.
pub fn observation_loglik(
    obs: &FatigueObservation,
    row: usize,
    p: &ParamVector,
    spec: &ModelSpec,
) -> Result<LogLik, ModelDataError> {
    if !p.matches(spec) {
        return Err(ModelDataError::ShapeMismatch);
    }
    if !(obs.cycles > 0.0 && obs.cycles.is_finite()) {
        return Err(ModelDataError::InvalidCycles {
            row,
            n: obs.cycles,
        });
    }
    if spec.family == Family::BirnbaumSaundersOnLog && obs.cycles <= 1.0 {
        return Err(ModelDataError::LifeLogNotPositive {
            row,
            n: obs.cycles,
        });
    }
    let transform = StressTransform {
        kind: spec.transform,
        q: p.q,
    };
    let s_eq = transform.equivalent_stress(obs, row)?;
    let y = spec.life_to_y(obs.cycles);
    let ln_n = obs.cycles.ln();
    Ok(contribution(
        spec.family,
        obs.is_runout,
        y,
        ln_n,
        spec.life_ln().ln(),
        s_eq,
        p,
        spec,
    ))
}

/// Total censored log-likelihood over a dataset.
pub fn total_loglik(
    data: &FatigueDataset,
    p: &ParamVector,
    spec: &ModelSpec,
) -> Result<LogLik, ModelDataError> {
    if !p.matches(spec) {
        return Err(ModelDataError::ShapeMismatch);
    }
    let prepared = Prepared::new(data, spec)?;
    Ok(prepared.loglik(p))
}

/// Scalar likelihood core shared by the public per-observation entry point
/// and the prepared fast path. Maps every non-finite value (probability
/// zero, overflowed intermediate) to `Infeasible`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn contribution(
    family: Family,
    is_runout: bool,
    y: f64,
    ln_n: f64,
    jac_const: f64,
    s_eq: f64,
    p: &ParamVector,
    spec: &ModelSpec,
) -> LogLik {
    let gap = s_eq - p.a3;
    if gap <= 0.0 {
        return if is_runout {
            LogLik::Finite(0.0)
        } else {
            LogLik::Infeasible
        };
    }
    let mu = p.a1 + p.a2 * gap.ln() / spec.log_base.ln();
    let sc = scale_at(s_eq, p, spec);
    finish_term(family, is_runout, y, ln_n, jac_const, mu, sc)
}

#[inline]
fn finish_term(
    family: Family,
    is_runout: bool,
    y: f64,
    ln_n: f64,
    jac_const: f64,
    mu: f64,
    sc: f64,
) -> LogLik {
    if !(sc > 0.0 && sc.is_finite() && mu.is_finite()) {
        return LogLik::Infeasible;
    }
    let term = match family {
        Family::NormalOnLog => {
            let k = NormalKernel { mu, sigma: sc };
            if is_runout {
                k.log_survival(y)
            } else {
                k.log_pdf(y) - ln_n - jac_const
            }
        }
        Family::SinhNormalOnLn => {
            let k = SinhNormalKernel { alpha: sc, mu };
            if is_runout {
                k.log_survival(y)
            } else {
                // Life transform is ln N, so the Jacobian is 1/N.
                k.log_pdf(y) - ln_n
            }
        }
        Family::BirnbaumSaundersOnLog => {
            if mu <= 0.0 {
                return LogLik::Infeasible;
            }
            let k = BirnbaumSaundersKernel { alpha: sc, mu };
            if is_runout {
                k.log_survival(y)
            } else {
                k.log_pdf(y) - ln_n - jac_const
            }
        }
    };
    if term.is_finite() {
        LogLik::Finite(term)
    } else {
        LogLik::Infeasible
    }
}

/// Per-observation loading data with the stress transform partially applied,
/// so likelihood evaluations inside the optimizer touch no `Option`s and do
/// no per-row error checking. Both variants carry the log of the equivalent
/// stress (or what is needed to get it by arithmetic alone), because the
/// log-linear scale model consumes `ln s_eq` on every evaluation.
pub(crate) enum Loading {
    /// Identity transform: equivalent stress per observation.
    Fixed { s: Vec<f64>, ln_s: Vec<f64> },
    /// Walker-type transforms: `s_eq_i = smax_i * exp((c0 + c1_i q) ln_arg_i)`.
    Power {
        ln_smax: Vec<f64>,
        ln_arg: Vec<f64>,
        c1: Vec<f64>,
        c0: f64,
    },
}

/// The loading shared by one block of prepared rows. Fatigue campaigns test
/// many specimens per stress level, so datasets collapse to a handful of
/// distinct loadings; location and scale are computed once per block.
enum GroupLoading {
    Fixed { s: f64, ln_s: f64 },
    Power { ln_smax: f64, ln_arg: f64, c1: f64 },
}

impl GroupLoading {
    /// Equivalent stress and its natural log for this group.
    #[inline]
    fn resolve(&self, c0: f64, q: f64) -> (f64, f64) {
        match *self {
            GroupLoading::Fixed { s, ln_s } => (s, ln_s),
            GroupLoading::Power {
                ln_smax,
                ln_arg,
                c1,
            } => {
                let ln_s = ln_smax + (c0 + c1 * q) * ln_arg;
                (ln_s.exp(), ln_s)
            }
        }
    }
}

/// Rows `lo..hi` share one loading.
struct LoadingGroup {
    lo: usize,
    hi: usize,
    has_failure: bool,
    loading: GroupLoading,
}

/// A dataset validated against a model spec and laid out for repeated
/// likelihood evaluation: prepare once, then call [`Prepared::loglik`] per
/// candidate parameter vector. [`total_loglik`] is the one-shot equivalent.
/// Rows are permuted so that observations with the same loading are
/// contiguous; `y`, `runout`, and `loading` all use that permuted order, so
/// per-row access stays consistent for callers.
pub struct Prepared {
    pub(crate) y: Vec<f64>,
    pub(crate) runout: Vec<bool>,
    pub(crate) loading: Loading,
    pub(crate) family: Family,
    pub(crate) spec: ModelSpec,
    groups: Vec<LoadingGroup>,
    c0: f64,
    /// Failure Jacobian shift per row: `ln N + ln(ln base)` for families
    /// on `log_b N`, `ln N` for the sinh-normal family on `ln N`.
    fail_shift: Vec<f64>,
    /// Birnbaum-Saunders per-row precomputes (empty for other families).
    sqrt_y: Vec<f64>,
    inv_sqrt_y: Vec<f64>,
    ln_y: Vec<f64>,
    inv_y: Vec<f64>,
}

impl Prepared {
    pub fn new(data: &FatigueDataset, spec: &ModelSpec) -> Result<Self, ModelDataError> {
        if data.observations.is_empty() {
            return Err(ModelDataError::Empty);
        }
        let m = data.observations.len();
        let mut y = Vec::with_capacity(m);
        let mut ln_n = Vec::with_capacity(m);
        let mut runout = Vec::with_capacity(m);
        let mut n_failures = 0;

        for (i, obs) in data.observations.iter().enumerate() {
            let row = i + 1;
            if !(obs.cycles > 0.0 && obs.cycles.is_finite()) {
                return Err(ModelDataError::InvalidCycles {
                    row,
                    n: obs.cycles,
                });
            }
            if spec.family == Family::BirnbaumSaundersOnLog && obs.cycles <= 1.0 {
                return Err(ModelDataError::LifeLogNotPositive {
                    row,
                    n: obs.cycles,
                });
            }
            y.push(spec.life_to_y(obs.cycles));
            ln_n.push(obs.cycles.ln());
            runout.push(obs.is_runout);
            if !obs.is_runout {
                n_failures += 1;
            }
        }
        if n_failures == 0 {
            return Err(ModelDataError::NoFailures);
        }

        // Per-row loading data plus a bit-exact key identifying the loading,
        // used to block rows that share one stress condition.
        let mut keys: Vec<[u64; 3]> = Vec::with_capacity(m);
        let (loading, c0) = if spec.transform == TransformKind::Identity {
            let mut s = Vec::with_capacity(m);
            for (i, obs) in data.observations.iter().enumerate() {
                match (obs.s_eq_direct, obs.stress_ratio) {
                    (Some(v), _) => s.push(v),
                    (None, None) => s.push(obs.s_max),
                    (None, Some(_)) => {
                        return Err(StressError::AmbiguousIdentity { row: i + 1 }.into())
                    }
                }
            }
            let ln_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
            for &v in &s {
                keys.push([v.to_bits(), 0, 0]);
            }
            (Loading::Fixed { s, ln_s }, 0.0)
        } else {
            let mut ln_smax = Vec::with_capacity(m);
            let mut ln_arg = Vec::with_capacity(m);
            let mut c1 = Vec::with_capacity(m);
            let c0 = match spec.transform {
                TransformKind::Walker => 0.0,
                TransformKind::NormalizedWalker | TransformKind::SignedWalker => 1.0,
                TransformKind::Identity => unreachable!(),
            };
            for (i, obs) in data.observations.iter().enumerate() {
                let r = obs.stress_ratio.ok_or(StressError::MissingStressRatio {
                    row: i + 1,
                    kind: spec.transform,
                })?;
                ln_smax.push(obs.s_max.ln());
                match spec.transform {
                    TransformKind::Walker => {
                        ln_arg.push((1.0 - r).ln());
                        c1.push(1.0);
                    }
                    TransformKind::NormalizedWalker => {
                        ln_arg.push(((1.0 - r) / 2.0).ln());
                        c1.push(1.0);
                    }
                    TransformKind::SignedWalker => {
                        ln_arg.push(((1.0 - r) / 2.0).ln());
                        c1.push(-crate::stress::sign(r));
                    }
                    TransformKind::Identity => unreachable!(),
                }
                keys.push([
                    ln_smax[i].to_bits(),
                    ln_arg[i].to_bits(),
                    c1[i].to_bits(),
                ]);
            }
            (
                Loading::Power {
                    ln_smax,
                    ln_arg,
                    c1,
                    c0,
                },
                c0,
            )
        };

        // Group ids in order of first appearance, then a stable permutation
        // that makes each group's rows contiguous.
        let mut gid_of_key: HashMap<[u64; 3], usize> = HashMap::new();
        let mut row_gid = Vec::with_capacity(m);
        for key in &keys {
            let next = gid_of_key.len();
            row_gid.push(*gid_of_key.entry(*key).or_insert(next));
        }
        let mut perm: Vec<usize> = (0..m).collect();
        perm.sort_by_key(|&i| row_gid[i]);

        let y: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let ln_n: Vec<f64> = perm.iter().map(|&i| ln_n[i]).collect();
        let runout: Vec<bool> = perm.iter().map(|&i| runout[i]).collect();
        let loading = match loading {
            Loading::Fixed { s, ln_s } => Loading::Fixed {
                s: perm.iter().map(|&i| s[i]).collect(),
                ln_s: perm.iter().map(|&i| ln_s[i]).collect(),
            },
            Loading::Power {
                ln_smax,
                ln_arg,
                c1,
                c0,
            } => Loading::Power {
                ln_smax: perm.iter().map(|&i| ln_smax[i]).collect(),
                ln_arg: perm.iter().map(|&i| ln_arg[i]).collect(),
                c1: perm.iter().map(|&i| c1[i]).collect(),
                c0,
            },
        };

        let mut groups: Vec<LoadingGroup> = Vec::with_capacity(gid_of_key.len());
        let mut lo = 0;
        while lo < m {
            let gid = row_gid[perm[lo]];
            let mut hi = lo + 1;
            while hi < m && row_gid[perm[hi]] == gid {
                hi += 1;
            }
            let group_loading = match &loading {
                Loading::Fixed { s, ln_s } => GroupLoading::Fixed {
                    s: s[lo],
                    ln_s: ln_s[lo],
                },
                Loading::Power {
                    ln_smax,
                    ln_arg,
                    c1,
                    ..
                } => GroupLoading::Power {
                    ln_smax: ln_smax[lo],
                    ln_arg: ln_arg[lo],
                    c1: c1[lo],
                },
            };
            groups.push(LoadingGroup {
                lo,
                hi,
                has_failure: runout[lo..hi].iter().any(|r| !r),
                loading: group_loading,
            });
            lo = hi;
        }

        let jac_const = spec.life_ln().ln();
        let fail_shift: Vec<f64> = ln_n.iter().map(|v| v + jac_const).collect();
        let (sqrt_y, inv_sqrt_y, ln_y, inv_y) =
            if spec.family == Family::BirnbaumSaundersOnLog {
                let sqrt_y: Vec<f64> = y.iter().map(|v| v.sqrt()).collect();
                (
                    sqrt_y.clone(),
                    sqrt_y.iter().map(|v| 1.0 / v).collect(),
                    y.iter().map(|v| v.ln()).collect(),
                    y.iter().map(|v| 1.0 / v).collect(),
                )
            } else {
                (Vec::new(), Vec::new(), Vec::new(), Vec::new())
            };

        Ok(Prepared {
            y,
            runout,
            loading,
            family: spec.family,
            spec: *spec,
            groups,
            c0,
            fail_shift,
            sqrt_y,
            inv_sqrt_y,
            ln_y,
            inv_y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// Equivalent stress and its natural log for observation `i`.
    #[inline]
    pub(crate) fn loading_at(&self, i: usize, q: f64) -> (f64, f64) {
        match &self.loading {
            Loading::Fixed { s, ln_s } => (s[i], ln_s[i]),
            Loading::Power {
                ln_smax,
                ln_arg,
                c1,
                c0,
            } => {
                let ln_s = ln_smax[i] + (c0 + c1[i] * q) * ln_arg[i];
                (ln_s.exp(), ln_s)
            }
        }
    }

    /// Total log-likelihood with compensated (Neumaier) summation in a fixed
    /// order, so the result is reproducible bit for bit.
    ///
    /// Walks the loading groups, resolving equivalent stress, location, and
    /// scale once per group; the inner loops carry only the per-row kernel
    /// arithmetic. Agrees with summing [`observation_loglik`] over rows up
    /// to floating-point reassociation.
    pub fn loglik(&self, p: &ParamVector) -> LogLik {
        assert!(
            p.matches(&self.spec),
            "parameter vector shape does not match the prepared model"
        );
        let q = p.q.unwrap_or(0.0);
        let inv_loc_ln = 1.0 / self.spec.log_base.ln();
        // Hoist the scale model: constant scale, or exp(ln(base) B1 + B2 ln s).
        let (const_scale, b1_lnb, b2) = match p.scale {
            ScaleParams::Constant(t) => (Some(t), 0.0, 0.0),
            ScaleParams::LogLinear { b1, b2 } => (None, self.spec.log_base.ln() * b1, b2),
        };
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        let mut add = |v: f64| {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        };
        for g in &self.groups {
            let (s_eq, ln_s) = g.loading.resolve(self.c0, q);
            let gap = s_eq - p.a3;
            if gap <= 0.0 {
                if g.has_failure {
                    return LogLik::Infeasible;
                }
                // Every row in the group is a run-out below the limit:
                // infinite life predicted and observed, contribution 0.
                continue;
            }
            let mu = p.a1 + p.a2 * gap.ln() * inv_loc_ln;
            let sc = match const_scale {
                Some(t) => t,
                None => (b1_lnb + b2 * ln_s).exp(),
            };
            if !(sc > 0.0 && sc.is_finite() && mu.is_finite()) {
                return LogLik::Infeasible;
            }
            match self.family {
                Family::NormalOnLog => {
                    // log pdf = -z^2/2 - (ln(2 pi)/2 + ln sigma) - (ln N + ln ln b)
                    let fail_const = 0.5 * crate::dist::LN_2PI + sc.ln();
                    for i in g.lo..g.hi {
                        let z = (self.y[i] - mu) / sc;
                        let term = if self.runout[i] {
                            crate::dist::std_normal_log_survival(z)
                        } else {
                            -0.5 * z * z - fail_const - self.fail_shift[i]
                        };
                        if !term.is_finite() {
                            return LogLik::Infeasible;
                        }
                        add(term);
                    }
                }
                Family::SinhNormalOnLn => {
                    let fail_const = sc.ln() + 0.5 * crate::dist::LN_2PI;
                    let sinh_coef = 2.0 / sc;
                    let quad_coef = 2.0 / (sc * sc);
                    for i in g.lo..g.hi {
                        let w = (self.y[i] - mu) / 2.0;
                        let term = if self.runout[i] {
                            crate::dist::std_normal_log_survival(sinh_coef * w.sinh())
                        } else {
                            let log_cosh = if w.abs() > 20.0 {
                                w.abs() - std::f64::consts::LN_2
                            } else {
                                w.cosh().ln()
                            };
                            let s = w.sinh();
                            log_cosh - quad_coef * s * s - fail_const - self.fail_shift[i]
                        };
                        if !term.is_finite() {
                            return LogLik::Infeasible;
                        }
                        add(term);
                    }
                }
                Family::BirnbaumSaundersOnLog => {
                    if mu <= 0.0 {
                        return LogLik::Infeasible;
                    }
                    let sqrt_mu = mu.sqrt();
                    let inv_sqrt_mu = 1.0 / sqrt_mu;
                    let inv_mu = 1.0 / mu;
                    let inv_sc = 1.0 / sc;
                    let quad_coef = 1.0 / (2.0 * sc * sc);
                    // log pdf = ln(y + mu) - fail_const - 1.5 ln y
                    //           - (y/mu + mu/y - 2)/(2 alpha^2) - (ln N + ln ln b)
                    let fail_const =
                        0.5 * crate::dist::LN_2PI + (2.0 * sc).ln() + 0.5 * mu.ln();
                    for i in g.lo..g.hi {
                        let term = if self.runout[i] {
                            let z = (self.sqrt_y[i] * inv_sqrt_mu
                                - sqrt_mu * self.inv_sqrt_y[i])
                                * inv_sc;
                            crate::dist::std_normal_log_survival(z)
                        } else {
                            let y = self.y[i];
                            (y + mu).ln()
                                - fail_const
                                - 1.5 * self.ln_y[i]
                                - (y * inv_mu + mu * self.inv_y[i] - 2.0) * quad_coef
                                - self.fail_shift[i]
                        };
                        if !term.is_finite() {
                            return LogLik::Infeasible;
                        }
                        add(term);
                    }
                }
            }
        }
        LogLik::Finite(sum + comp)
    }
}
