//! Curves and diagnostics from a fitted model: life quantiles over stress,
//! survival over cycles, and single-population probability plots.

use crate::data::FatigueDataset;
use crate::dist::{BirnbaumSaundersKernel, Kernel, NormalKernel, SinhNormalKernel};
use crate::inference::fmt_f64;
use crate::likelihood::{location, scale_at, Family, ModelSpec, ParamVector};
use crate::mle::{nelder_mead, FittedModel, NmOptions};
use crate::stress::StressError;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("probability must lie strictly between 0 and 1, got {0}")]
    BadProbability(f64),
    #[error("stress grid values must be positive, got {0}")]
    NonPositiveStress(f64),
    #[error("cycle grid values must be positive, got {0}")]
    NonPositiveCycles(f64),
    #[error(
        "the fitted location is not a valid Birnbaum-Saunders parameter at s_eq = {s_eq}; \
         the model does not extend to this stress"
    )]
    LocationOutOfRange { s_eq: f64 },
    #[error("probability plots need at least 3 failures, found {found}")]
    TooFewFailures { found: usize },
    #[error(
        "a log-life Birnbaum-Saunders plot needs every failure above one cycle; \
         data row {row} has {cycles}"
    )]
    NonPositiveTransformedLife { row: usize, cycles: f64 },
    #[error("all quantile curves must share one stress grid; curve {index} differs")]
    MismatchedGrids { index: usize },
    #[error(transparent)]
    Stress(#[from] StressError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Life distribution (on the transformed scale) at an equivalent stress.
/// `Ok(None)` means the stress is at or below the fatigue limit: life is
/// infinite and no kernel exists.
pub fn kernel_at(
    p: &ParamVector,
    spec: &ModelSpec,
    s_eq: f64,
) -> Result<Option<Kernel>, CurveError> {
    if !(s_eq > 0.0) {
        return Err(CurveError::NonPositiveStress(s_eq));
    }
    let Some(mu) = location(s_eq, p, spec) else {
        return Ok(None);
    };
    let sc = scale_at(s_eq, p, spec);
    let kernel = match spec.family {
        Family::NormalOnLog => NormalKernel::new(mu, sc).map(Kernel::Normal),
        Family::SinhNormalOnLn => SinhNormalKernel::new(sc, mu).map(Kernel::SinhNormal),
        Family::BirnbaumSaundersOnLog => {
            BirnbaumSaundersKernel::new(sc, mu).map(Kernel::BirnbaumSaunders)
        }
    };
    kernel
        .map(Some)
        .map_err(|_| CurveError::LocationOutOfRange { s_eq })
}

/// One life quantile as a function of equivalent stress. `cycles` holds
/// `f64::INFINITY` wherever the stress is at or below the fatigue limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub probability: f64,
    pub s_eq: Vec<f64>,
    pub cycles: Vec<f64>,
}

/// The `probability` quantile of cycles to failure over `s_grid`
/// (equivalent-stress units).
pub fn quantile_curve(
    fit: &FittedModel,
    probability: f64,
    s_grid: &[f64],
) -> Result<QuantileCurve, CurveError> {
    if !(probability > 0.0 && probability < 1.0) {
        return Err(CurveError::BadProbability(probability));
    }
    let mut cycles = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let n = match kernel_at(&fit.params, &fit.spec, s)? {
            None => f64::INFINITY,
            Some(k) => fit.spec.y_to_life(k.quantile(probability)),
        };
        cycles.push(n);
    }
    Ok(QuantileCurve {
        probability,
        s_eq: s_grid.to_vec(),
        cycles,
    })
}

/// Column label for one quantile: `p05`, `p50`, `p99`, or `p2.5` when the
/// percentage is not an integer.
pub fn quantile_label(probability: f64) -> String {
    let pct = probability * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("p{:02}", pct.round() as i64)
    } else {
        format!("p{pct}")
    }
}

/// CSV table `s_eq,cycles_p05,...` from curves sharing one stress grid.
/// Infinite life prints as `inf`.
pub fn quantile_table_csv<W: Write>(curves: &[QuantileCurve], mut w: W) -> Result<(), CurveError> {
    let Some(first) = curves.first() else {
        return Ok(());
    };
    for (i, c) in curves.iter().enumerate().skip(1) {
        if c.s_eq != first.s_eq {
            return Err(CurveError::MismatchedGrids { index: i });
        }
    }
    let mut header = String::from("s_eq");
    for c in curves {
        header.push_str(",cycles_");
        header.push_str(&quantile_label(c.probability));
    }
    writeln!(w, "{header}")?;
    for (r, &s) in first.s_eq.iter().enumerate() {
        let mut line = fmt_f64(s);
        for c in curves {
            line.push(',');
            line.push_str(&fmt_f64(c.cycles[r]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Survival of cycles to failure at one loading. Below the fatigue limit the
/// curve is identically 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub s_max: f64,
    pub stress_ratio: Option<f64>,
    /// Equivalent stress under the fitted transform.
    pub s_eq: f64,
    pub below_limit: bool,
    pub cycles: Vec<f64>,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    /// CSV rows `cycles,survival`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cycles,survival")?;
        for (n, p) in self.cycles.iter().zip(&self.survival) {
            writeln!(w, "{},{}", fmt_f64(*n), fmt_f64(*p))?;
        }
        Ok(())
    }
}

/// Survival probability over `cycle_grid` at the loading `(s_max,
/// stress_ratio)`, converted to equivalent stress with the fitted transform
/// and exponent.
pub fn survival_curve(
    fit: &FittedModel,
    s_max: f64,
    stress_ratio: Option<f64>,
    cycle_grid: &[f64],
) -> Result<SurvivalCurve, CurveError> {
    let probe = crate::data::FatigueObservation {
        s_max,
        stress_ratio,
        cycles: 1.0,
        is_runout: false,
        group: None,
        s_eq_direct: None,
    };
    let transform = crate::stress::StressTransform {
        kind: fit.spec.transform,
        q: fit.params.q,
    };
    let s_eq = transform.equivalent_stress(&probe, 0)?;
    for &n in cycle_grid {
        if !(n > 0.0) {
            return Err(CurveError::NonPositiveCycles(n));
        }
    }
    let kernel = kernel_at(&fit.params, &fit.spec, s_eq)?;
    let survival = cycle_grid
        .iter()
        .map(|&n| match &kernel {
            None => 1.0,
            Some(k) => k.survival(fit.spec.life_to_y(n)),
        })
        .collect();
    Ok(SurvivalCurve {
        s_max,
        stress_ratio,
        s_eq,
        below_limit: kernel.is_none(),
        cycles: cycle_grid.to_vec(),
        survival,
    })
}

/// Life axis of a probability plot: raw cycles or their natural log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifeScale {
    Cycles,
    LogCycles,
}

impl LifeScale {
    pub fn label(&self) -> &'static str {
        match self {
            LifeScale::Cycles => "cycles",
            LifeScale::LogCycles => "log_cycles",
        }
    }
}

impl std::str::FromStr for LifeScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cycles" => Ok(LifeScale::Cycles),
            "log" | "log_cycles" => Ok(LifeScale::LogCycles),
            other => Err(format!("unknown life scale '{other}', expected cycles or log")),
        }
    }
}

/// One plotted failure: its plotting position and the observed and fitted
/// quantiles of the transformed life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub position: f64,
    pub empirical: f64,
    pub fitted: f64,
}

/// Single-population probability plot: all observations pooled, a two
/// parameter kernel of the chosen shape fit by censored maximum likelihood,
/// failures placed at Blom plotting positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityPlot {
    pub family: Family,
    pub life_scale: LifeScale,
    pub kernel: Kernel,
    pub n_failures: usize,
    pub n_runouts: usize,
    pub points: Vec<PlotPoint>,
    /// Pearson correlation between empirical and fitted quantiles; values
    /// near 1 support the chosen shape.
    pub correlation: f64,
}

impl ProbabilityPlot {
    /// CSV rows `position,empirical,fitted`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "position,empirical,fitted")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(p.position),
                fmt_f64(p.empirical),
                fmt_f64(p.fitted)
            )?;
        }
        Ok(())
    }
}

/// Probability plot of the pooled dataset against one kernel shape.
///
/// The `family` argument picks the kernel only; the stress-life structure
/// plays no part. Run-outs enter the fit through their survival probability
/// but are not plotted. Positions use Blom's approximation
/// `(i - 0.375) / (n + 0.25)`.
pub fn probability_plot(
    data: &FatigueDataset,
    family: Family,
    life_scale: LifeScale,
) -> Result<ProbabilityPlot, CurveError> {
    let transform = |n: f64| match life_scale {
        LifeScale::Cycles => n,
        LifeScale::LogCycles => n.ln(),
    };
    let mut failures: Vec<f64> = Vec::new();
    let mut runouts: Vec<f64> = Vec::new();
    for (i, o) in data.observations.iter().enumerate() {
        let t = transform(o.cycles);
        if o.is_runout {
            runouts.push(t);
        } else {
            if family == Family::BirnbaumSaundersOnLog && t <= 0.0 {
                return Err(CurveError::NonPositiveTransformedLife {
                    row: i + 1,
                    cycles: o.cycles,
                });
            }
            failures.push(t);
        }
    }
    if failures.len() < 3 {
        return Err(CurveError::TooFewFailures {
            found: failures.len(),
        });
    }
    failures.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let kernel = fit_plot_kernel(family, &failures, &runouts);
    let n_f = failures.len();
    let points: Vec<PlotPoint> = failures
        .iter()
        .enumerate()
        .map(|(idx, &t)| {
            let position = (idx as f64 + 1.0 - 0.375) / (n_f as f64 + 0.25);
            PlotPoint {
                position,
                empirical: t,
                fitted: kernel.quantile(position),
            }
        })
        .collect();

    let correlation = pearson(
        points.iter().map(|p| p.empirical),
        points.iter().map(|p| p.fitted),
        n_f,
    );
    Ok(ProbabilityPlot {
        family,
        life_scale,
        kernel,
        n_failures: n_f,
        n_runouts: runouts.len(),
        points,
        correlation,
    })
}

/// Censored two-parameter maximum likelihood for the plot kernel. The search
/// runs over `(location, ln shape)`, with the Birnbaum-Saunders location
/// itself on the log scale to keep it positive.
fn fit_plot_kernel(family: Family, failures: &[f64], runouts: &[f64]) -> Kernel {
    let unpack = |x: &[f64]| -> Option<Kernel> {
        let shape = x[1].exp();
        match family {
            Family::NormalOnLog => NormalKernel::new(x[0], shape).ok().map(Kernel::Normal),
            Family::SinhNormalOnLn => SinhNormalKernel::new(shape, x[0])
                .ok()
                .map(Kernel::SinhNormal),
            Family::BirnbaumSaundersOnLog => BirnbaumSaundersKernel::new(shape, x[0].exp())
                .ok()
                .map(Kernel::BirnbaumSaunders),
        }
    };
    let objective = |x: &[f64]| -> f64 {
        let Some(k) = unpack(x) else {
            return f64::INFINITY;
        };
        let mut neg = 0.0;
        for &t in failures {
            neg -= k.log_pdf(t);
        }
        for &t in runouts {
            neg -= k.log_survival(t);
        }
        if neg.is_finite() {
            neg
        } else {
            f64::INFINITY
        }
    };

    let n = failures.len() as f64;
    let mean = failures.iter().sum::<f64>() / n;
    let sd = (failures.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n)
        .sqrt()
        .max(1e-6);
    let median = failures[failures.len() / 2];
    let center = match family {
        Family::NormalOnLog | Family::SinhNormalOnLn => vec![mean, sd.ln()],
        Family::BirnbaumSaundersOnLog => {
            let cv = (sd / mean.abs().max(1e-12)).clamp(1e-3, 10.0);
            vec![median.max(1e-12).ln(), cv.ln()]
        }
    };

    let lo = [-1.0e8, -600.0];
    let hi = [1.0e8, 600.0];
    let opts = NmOptions {
        max_iters: 2000,
        rel_tol: 1e-11,
    };
    let offsets: [(f64, f64); 5] = [(0.0, 0.0), (0.7, 0.0), (-0.7, 0.0), (0.0, 0.7), (0.0, -0.7)];
    let mut best: Option<crate::mle::NmResult> = None;
    for (da, db) in offsets {
        let x0 = [center[0] + da, center[1] + db];
        let res = nelder_mead(&objective, &x0, &[0.3, 0.3], &lo, &hi, &opts);
        let better = best.as_ref().map(|b| res.f < b.f).unwrap_or(true);
        if better {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start ran");
    unpack(&best.x).expect("optimum unpacks; starts were feasible")
}

fn pearson(
    xs: impl Iterator<Item = f64>,
    ys: impl Iterator<Item = f64>,
    n: usize,
) -> f64 {
    let pairs: Vec<(f64, f64)> = xs.zip(ys).collect();
    let nf = n as f64;
    let mx = pairs.iter().map(|(x, _)| x).sum::<f64>() / nf;
    let my = pairs.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
