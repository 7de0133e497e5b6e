//! Synthetic dataset generation by inverse-CDF sampling from a fully
//! specified model, for recovery studies and tests.

use crate::curves::{kernel_at, CurveError};
use crate::data::{FatigueDataset, FatigueObservation};
use crate::likelihood::{ModelSpec, ParamVector};
use crate::stress::StressTransform;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// One loading condition to simulate an observation at.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingPoint {
    pub s_max: f64,
    pub stress_ratio: Option<f64>,
    pub s_eq_direct: Option<f64>,
    pub group: Option<String>,
}

impl LoadingPoint {
    pub fn at(s_max: f64) -> Self {
        Self {
            s_max,
            stress_ratio: None,
            s_eq_direct: None,
            group: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(
        "loading point {index} sits at or below the fatigue limit; simulated life is \
         infinite, which needs a run-out ceiling"
    )]
    InfiniteLifeNeedsCeiling { index: usize },
    #[error("parameter shape does not match the model")]
    ShapeMismatch,
}

/// Draw one dataset from the model by inverse-CDF sampling.
///
/// Lives above `runout_ceiling` are recorded as run-outs at the ceiling,
/// matching how a test machine stops. Loadings at or below the fatigue limit
/// produce run-outs too, and are an error when no ceiling is given.
pub fn simulate_dataset(
    spec: &ModelSpec,
    params: &ParamVector,
    loadings: &[LoadingPoint],
    runout_ceiling: Option<f64>,
    seed: u64,
    name: &str,
) -> Result<FatigueDataset, SynthError> {
    if !params.matches(spec) {
        return Err(SynthError::ShapeMismatch);
    }
    let transform = StressTransform {
        kind: spec.transform,
        q: params.q,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(loadings.len());
    for (index, l) in loadings.iter().enumerate() {
        let probe = FatigueObservation {
            s_max: l.s_max,
            stress_ratio: l.stress_ratio,
            cycles: 1.0,
            is_runout: false,
            group: None,
            s_eq_direct: l.s_eq_direct,
        };
        let s_eq = transform
            .equivalent_stress(&probe, index)
            .map_err(CurveError::from)?;
        // One uniform draw per loading point, consumed whether or not the
        // point lies below the limit, so censoring choices never shift the
        // draws of later points.
        let u: f64 = rng.random::<f64>().clamp(1e-15, 1.0 - 1e-15);
        let (cycles, is_runout) = match kernel_at(params, spec, s_eq)? {
            None => match runout_ceiling {
                Some(c) => (c, true),
                None => return Err(SynthError::InfiniteLifeNeedsCeiling { index }),
            },
            Some(kernel) => {
                let n = spec.y_to_life(kernel.quantile(u));
                match runout_ceiling {
                    Some(c) if n > c => (c, true),
                    _ => (n, false),
                }
            }
        };
        observations.push(FatigueObservation {
            s_max: l.s_max,
            stress_ratio: l.stress_ratio,
            cycles,
            is_runout,
            group: l.group.clone(),
            s_eq_direct: l.s_eq_direct,
        });
    }
    Ok(FatigueDataset {
        name: name.to_string(),
        unit: String::new(),
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{LogBase, ModelName, ScaleParams};
    use crate::stress::TransformKind;
    use approx::assert_relative_eq;

    fn ia() -> (ModelSpec, ParamVector) {
        (
            ModelSpec::new(ModelName::Ia, TransformKind::Identity, LogBase::Ten),
            ParamVector {
                a1: 7.4,
                a2: -2.0,
                a3: 35.0,
                q: None,
                scale: ScaleParams::Constant(0.25),
            },
        )
    }

    #[test]
    fn simulated_medians_track_the_model() {
        let (spec, params) = ia();
        let m = 4000;
        let loadings: Vec<LoadingPoint> = (0..m).map(|_| LoadingPoint::at(55.0)).collect();
        let data = simulate_dataset(&spec, &params, &loadings, None, 11, "sim").unwrap();
        assert_eq!(data.len(), m);
        let mut lives: Vec<f64> = data.observations.iter().map(|o| o.cycles).collect();
        lives.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = lives[m / 2];
        let mu = 7.4 - 2.0 * 20.0f64.log10();
        // Median of 4000 draws sits within a few percent of the model median.
        assert_relative_eq!(median, 10f64.powf(mu), max_relative = 0.05);
    }

    #[test]
    fn ceiling_censors_and_below_limit_needs_ceiling() {
        let (spec, params) = ia();
        let loadings = vec![LoadingPoint::at(34.0)];
        match simulate_dataset(&spec, &params, &loadings, None, 1, "sim") {
            Err(SynthError::InfiniteLifeNeedsCeiling { index: 0 }) => {}
            other => panic!("expected ceiling error, got {other:?}"),
        }

        let data = simulate_dataset(&spec, &params, &loadings, Some(1.0e7), 1, "sim").unwrap();
        assert!(data.observations[0].is_runout);
        assert_eq!(data.observations[0].cycles, 1.0e7);

        // High stress with a low ceiling censors some draws.
        let many: Vec<LoadingPoint> = (0..200).map(|_| LoadingPoint::at(40.0)).collect();
        let data = simulate_dataset(&spec, &params, &many, Some(1.0e6), 5, "sim").unwrap();
        assert!(data.run_out_count() > 0);
        assert!(data.failure_count() > 0);
        for o in &data.observations {
            assert!(o.cycles <= 1.0e6);
        }
    }

    #[test]
    fn draws_are_reproducible_and_seed_sensitive() {
        let (spec, params) = ia();
        let loadings: Vec<LoadingPoint> = (0..20).map(|i| LoadingPoint::at(40.0 + i as f64)).collect();
        let a = simulate_dataset(&spec, &params, &loadings, Some(1.0e7), 3, "sim").unwrap();
        let b = simulate_dataset(&spec, &params, &loadings, Some(1.0e7), 3, "sim").unwrap();
        let c = simulate_dataset(&spec, &params, &loadings, Some(1.0e7), 4, "sim").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn groups_and_ratios_pass_through() {
        let spec = ModelSpec::new(ModelName::Ia, TransformKind::Walker, LogBase::Ten);
        let params = ParamVector {
            a1: 7.4,
            a2: -2.0,
            a3: 20.0,
            q: Some(0.5),
            scale: ScaleParams::Constant(0.25),
        };
        let loadings = vec![LoadingPoint {
            s_max: 60.0,
            stress_ratio: Some(0.1),
            s_eq_direct: None,
            group: Some("lab-a".into()),
        }];
        let data = simulate_dataset(&spec, &params, &loadings, None, 9, "sim").unwrap();
        let o = &data.observations[0];
        assert_eq!(o.stress_ratio, Some(0.1));
        assert_eq!(o.group.as_deref(), Some("lab-a"));
        assert!(!o.is_runout);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (spec, mut params) = ia();
        params.q = Some(0.3);
        let loadings = vec![LoadingPoint::at(50.0)];
        match simulate_dataset(&spec, &params, &loadings, None, 1, "sim") {
            Err(SynthError::ShapeMismatch) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }
}
