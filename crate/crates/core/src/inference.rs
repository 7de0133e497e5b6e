//! Model comparison and uncertainty: information criteria, profile
//! likelihood for the fatigue limit, and stratified bootstrap intervals.

use crate::data::{FatigueDataset, FatigueObservation};
use crate::likelihood::{ModelSpec, Prepared};
use crate::mle::{maximize, FitConfig, FitError, FittedModel, Layout};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Log-likelihood based model scores. Lower is better for all three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub loglik: f64,
    pub k: usize,
    pub m: usize,
    pub aic: f64,
    pub bic: f64,
    /// Small-sample corrected AIC; `None` when `m <= k + 1`, where the
    /// correction divides by zero or goes negative.
    pub aicc: Option<f64>,
}

impl IcReport {
    pub fn from_parts(loglik: f64, k: usize, m: usize) -> Self {
        let aic = 2.0 * k as f64 - 2.0 * loglik;
        let bic = k as f64 * (m as f64).ln() - 2.0 * loglik;
        let aicc = if m > k + 1 {
            Some(aic + (2 * k * (k + 1)) as f64 / (m - k - 1) as f64)
        } else {
            None
        };
        Self {
            loglik,
            k,
            m,
            aic,
            bic,
            aicc,
        }
    }

    pub fn of(fit: &FittedModel) -> Self {
        Self::from_parts(fit.loglik, fit.k, fit.m)
    }
}

/// One grid point of the fatigue-limit profile. `loglik` is `None` where
/// the pinned limit leaves no feasible parameters (some failure would sit
/// at or below it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub a3: f64,
    pub loglik: Option<f64>,
    /// Likelihood ratio `exp(loglik - mle_loglik)`.
    pub normalized: Option<f64>,
}

/// Profile likelihood of the fatigue limit over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub points: Vec<ProfilePoint>,
    pub mle_a3: f64,
    pub mle_loglik: f64,
    /// Normalized-likelihood cutoff of the 95% profile confidence region,
    /// `exp(-chi2_{1,0.95}/2)`, about 0.1465.
    pub threshold_95: f64,
}

impl ProfileCurve {
    /// CSV rows `a3,profile_loglik,normalized`, empty cells where the grid
    /// point is infeasible.
    pub fn to_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "a3,profile_loglik,normalized")?;
        for p in &self.points {
            match (p.loglik, p.normalized) {
                (Some(l), Some(n)) => writeln!(w, "{},{},{}", fmt_f64(p.a3), fmt_f64(l), fmt_f64(n))?,
                _ => writeln!(w, "{},,", fmt_f64(p.a3))?,
            }
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same double, with
/// non-finite values spelled `inf`/`-inf`/`nan`.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:?}")
    }
}

fn chi2_1_95() -> f64 {
    let z = crate::dist::std_normal_quantile(0.975);
    z * z
}

/// Profile the fatigue limit A3 over `grid`, re-maximizing the remaining
/// parameters at each pinned value. Returns the profile and the full fit it
/// is normalized against.
///
/// Grid points are visited outward from the one nearest the MLE, each warm
/// started from its neighbor's optimum, so the curve stays on the same
/// likelihood ridge instead of hopping between local optima.
pub fn profile_fatigue_limit(
    data: &FatigueDataset,
    spec: &ModelSpec,
    cfg: &FitConfig,
    grid: &[f64],
) -> Result<(ProfileCurve, FittedModel), FitError> {
    let prepared = Prepared::new(data, spec)?;
    let full_layout = Layout::of(spec, None);
    let mut best = maximize(&prepared, cfg, full_layout, &[])?;

    let point_cfg = FitConfig {
        n_starts: (cfg.n_starts / 4).max(3),
        ..*cfg
    };

    let mut logliks: Vec<Option<f64>> = vec![None; grid.len()];
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (grid[a] - best.params.a3).abs();
        let db = (grid[b] - best.params.a3).abs();
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
    });
    let anchor = order.first().copied().unwrap_or(0);

    // Split into the left and right halves and walk each outward.
    let mut left: Vec<usize> = (0..=anchor).rev().collect();
    let mut right: Vec<usize> = (anchor + 1..grid.len()).collect();
    // The anchor belongs to the left walk; drop it from right if present.
    right.retain(|&i| i > anchor);

    for walk in [&mut left, &mut right] {
        let mut warm = best.params;
        for &i in walk.iter() {
            let a3 = grid[i];
            let layout = Layout::of(spec, Some(a3));
            let mut start = warm;
            start.a3 = a3;
            match maximize(&prepared, &point_cfg, layout, &[start]) {
                Ok(out) if out.loglik.is_finite() => {
                    logliks[i] = Some(out.loglik);
                    warm = out.params;
                    // A profile point beating the joint fit means the joint
                    // fit missed the optimum; rescue it from here.
                    if out.loglik > best.loglik {
                        let rescued = maximize(&prepared, &point_cfg, full_layout, &[out.params])?;
                        if rescued.loglik > best.loglik {
                            best = rescued;
                        }
                    }
                }
                Ok(_) | Err(FitError::NoFeasibleStart { .. }) => {
                    logliks[i] = None;
                }
                Err(e) => return Err(e),
            }
        }
    }

    let points = grid
        .iter()
        .zip(&logliks)
        .map(|(&a3, &l)| ProfilePoint {
            a3,
            loglik: l,
            normalized: l.map(|v| (v - best.loglik).exp()),
        })
        .collect();

    let curve = ProfileCurve {
        points,
        mle_a3: best.params.a3,
        mle_loglik: best.loglik,
        threshold_95: (-0.5 * chi2_1_95()).exp(),
    };
    let fitted = FittedModel {
        spec: *spec,
        params: best.params,
        loglik: best.loglik,
        k: spec.param_count(),
        m: data.len(),
        converged: best.converged,
        n_restarts_used: best.n_restarts_used,
        seed: cfg.seed,
    };
    Ok((curve, fitted))
}

/// Percentile interval for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Stratified bootstrap result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub stratified: bool,
    /// Replicates whose refit failed or did not converge; they are excluded
    /// from the intervals.
    pub n_failed: usize,
    pub intervals: Vec<ParamInterval>,
}

impl BootstrapSummary {
    /// CSV rows `param,estimate,lower,upper`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "param,estimate,lower,upper")?;
        for iv in &self.intervals {
            writeln!(
                w,
                "{},{},{},{}",
                iv.name,
                fmt_f64(iv.estimate),
                fmt_f64(iv.lower),
                fmt_f64(iv.upper)
            )?;
        }
        Ok(())
    }
}

const BOOTSTRAP_REFIT_STARTS: usize = 2;

/// Nonparametric bootstrap confidence intervals for all model parameters.
///
/// Resampling is stratified by the `group` label when `stratified` is true:
/// each stratum is resampled with replacement to its own size, so the design
/// balance of a multi-lab or multi-ratio test program is preserved. Each
/// replicate is refit warm-started from the full-data MLE. Replicate `i`
/// draws from an independent, seed-derived RNG stream, so results do not
/// depend on scheduling.
pub fn bootstrap_ci(
    data: &FatigueDataset,
    spec: &ModelSpec,
    cfg: &FitConfig,
    reps: usize,
    level: f64,
    stratified: bool,
) -> Result<BootstrapSummary, FitError> {
    assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1), got {level}");
    assert!(reps >= 2, "need at least 2 bootstrap replicates");
    let base = crate::mle::fit(data, spec, cfg)?;
    let layout = Layout::of(spec, None);

    let strata: Vec<Vec<usize>> = stratum_indices(data, stratified);

    let refit_cfg = |rep: usize| FitConfig {
        n_starts: BOOTSTRAP_REFIT_STARTS,
        seed: cfg
            .seed
            .wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        ..*cfg
    };

    let draws: Vec<Option<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(rep as u64 + 1);
            let observations = resample(&data.observations, &strata, &mut rng);
            let resampled = FatigueDataset {
                name: data.name.clone(),
                unit: data.unit.clone(),
                observations,
            };
            let prepared = Prepared::new(&resampled, spec).ok()?;
            let out = maximize(&prepared, &refit_cfg(rep), layout, &[base.params]).ok()?;
            if !out.converged {
                return None;
            }
            Some(out.params.named_values().into_iter().map(|(_, v)| v).collect())
        })
        .collect();

    let names: Vec<&'static str> = base.params.named_values().into_iter().map(|(n, _)| n).collect();
    let estimates: Vec<f64> = base.params.named_values().into_iter().map(|(_, v)| v).collect();
    let kept: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let n_failed = reps - kept.len();
    if kept.len() < 2 {
        return Err(FitError::AllReplicatesFailed { reps });
    }

    let lo_p = (1.0 - level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let intervals = names
        .iter()
        .zip(&estimates)
        .enumerate()
        .map(|(j, (name, &estimate))| {
            let mut col: Vec<f64> = kept.iter().map(|d| d[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            ParamInterval {
                name: (*name).to_string(),
                estimate,
                lower: percentile(&col, lo_p),
                upper: percentile(&col, hi_p),
            }
        })
        .collect();

    Ok(BootstrapSummary {
        reps,
        level,
        seed: cfg.seed,
        stratified,
        n_failed,
        intervals,
    })
}

/// Observation indices per stratum, strata in first appearance order. With
/// `stratified` false everything lands in one stratum.
fn stratum_indices(data: &FatigueDataset, stratified: bool) -> Vec<Vec<usize>> {
    if !stratified {
        return vec![(0..data.observations.len()).collect()];
    }
    let mut labels: Vec<&Option<String>> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, o) in data.observations.iter().enumerate() {
        match labels.iter().position(|l| **l == o.group) {
            Some(j) => groups[j].push(i),
            None => {
                labels.push(&o.group);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Within-stratum resampling with replacement, preserving each stratum's
/// size. Output keeps strata contiguous in first-appearance order.
fn resample<R: Rng>(
    observations: &[FatigueObservation],
    strata: &[Vec<usize>],
    rng: &mut R,
) -> Vec<FatigueObservation> {
    let mut out = Vec::with_capacity(observations.len());
    for stratum in strata {
        for _ in 0..stratum.len() {
            let pick = stratum[rng.random_range(0..stratum.len())];
            out.push(observations[pick].clone());
        }
    }
    out
}

/// Linear-interpolation percentile (the common "type 7" definition) of an
/// ascending-sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let i = (h.floor() as usize).min(n - 2);
    let frac = h - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}
