//! Equivalent-stress transforms.
//!
//! Tests run at different stress ratios `R = S_min / S_max` are pooled by
//! mapping each loading onto a single equivalent stress before the S-N
//! relation applies. All transforms here are Walker-type power laws in
//! `(1 - R)`; the exponent `q` is a model parameter fitted with the rest.

use crate::data::FatigueObservation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StressError {
    #[error("row {row}: {kind:?} transform needs a stress ratio")]
    MissingStressRatio { row: usize, kind: TransformKind },
    #[error("{kind:?} transform needs an exponent q")]
    MissingExponent { kind: TransformKind },
    #[error("row {row}: identity transform cannot use a row that has a stress ratio but no equivalent stress")]
    AmbiguousIdentity { row: usize },
}

/// Which pooling rule to apply.
///
/// With `m = S_max` and `r` the stress ratio:
/// - `Walker`: `m * (1 - r)^q`
/// - `NormalizedWalker`: `m * ((1 - r)/2)^(1 + q)`, which equals `S_max` at
///   `r = -1` for every `q`
/// - `SignedWalker`: `m * ((1 - r)/2)^(1 - sign(r) q)` with `sign(0) = 0`,
///   letting tension-tension and tension-compression data pull the exponent
///   in opposite directions
/// - `Identity`: no pooling; uses the recorded equivalent stress when the
///   row has one, otherwise `S_max`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "walker")]
    Walker,
    #[serde(rename = "nwalker")]
    NormalizedWalker,
    #[serde(rename = "swalker")]
    SignedWalker,
    #[serde(rename = "identity")]
    Identity,
}

impl TransformKind {
    /// Whether the transform has a fitted exponent.
    pub fn has_exponent(self) -> bool {
        self != TransformKind::Identity
    }

    /// Name used on the command line and in serialized output.
    pub fn label(self) -> &'static str {
        match self {
            TransformKind::Walker => "walker",
            TransformKind::NormalizedWalker => "nwalker",
            TransformKind::SignedWalker => "swalker",
            TransformKind::Identity => "identity",
        }
    }
}

/// A transform plus its exponent. `q` is `None` only for `Identity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressTransform {
    pub kind: TransformKind,
    pub q: Option<f64>,
}

impl StressTransform {
    pub fn identity() -> Self {
        Self {
            kind: TransformKind::Identity,
            q: None,
        }
    }

    pub fn new(kind: TransformKind, q: f64) -> Self {
        Self { kind, q: Some(q) }
    }

    /// Equivalent stress for one observation. `row` is only used to label
    /// errors (0-based observation index).
    pub fn equivalent_stress(
        &self,
        obs: &FatigueObservation,
        row: usize,
    ) -> Result<f64, StressError> {
        if self.kind == TransformKind::Identity {
            return match (obs.s_eq_direct, obs.stress_ratio) {
                (Some(s), _) => Ok(s),
                (None, None) => Ok(obs.s_max),
                (None, Some(_)) => Err(StressError::AmbiguousIdentity { row }),
            };
        }
        let r = obs
            .stress_ratio
            .ok_or(StressError::MissingStressRatio { row, kind: self.kind })?;
        let q = self.q.ok_or(StressError::MissingExponent { kind: self.kind })?;
        Ok(match self.kind {
            TransformKind::Walker => obs.s_max * (1.0 - r).powf(q),
            TransformKind::NormalizedWalker => obs.s_max * ((1.0 - r) / 2.0).powf(1.0 + q),
            TransformKind::SignedWalker => {
                obs.s_max * ((1.0 - r) / 2.0).powf(1.0 - sign(r) * q)
            }
            TransformKind::Identity => unreachable!(),
        })
    }
}

/// Sign with `sign(0) = 0`. `f64::signum` maps 0.0 to 1.0, which would make
/// the signed transform discontinuous in the wrong place.
pub(crate) fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}
