//! Standard-normal primitives and the three life-distribution kernels.
//!
//! Each kernel describes the distribution of transformed life `y` at a fixed
//! stress level. The fitting code composes them with a stress-dependent
//! location and scale; here they are plain two-parameter distributions.
//!
//! Tail accuracy matters more than usual: run-outs contribute log-survival
//! terms, and the optimizer wanders through parameter regions where the
//! standardized residual of a run-out can be far out in either tail. The
//! survival path below stays finite and monotone out to `z ~ 1e7`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// ln(2*pi)
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("alpha must be positive and finite, got {0}")]
    NonPositiveAlpha(f64),
    #[error("mu must be positive and finite, got {0}")]
    NonPositiveMu(f64),
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - 0.5 * LN_2PI).exp()
}

/// Standard normal CDF, accurate over the full double range.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Upper tail probability `P(Z > z)`.
pub fn std_normal_survival(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// `ln P(Z > z)` without underflow in the upper tail.
///
/// Three regimes:
/// - `z <= 0`: survival is at least 1/2, so `ln(1 - cdf)` via `ln_1p` keeps
///   full precision near zero;
/// - `0 < z < 10`: `erfc` still has plenty of headroom above the smallest
///   normal double, take its log directly;
/// - `z >= 10`: `erfc` would underflow near `z ~ 38`; use the continued
///   fraction for the Mills ratio, `P(Z > z) = pdf(z) / (z + 1/(z + 2/(z + ...)))`.
pub fn std_normal_log_survival(z: f64) -> f64 {
    if z <= 0.0 {
        (-std_normal_cdf(z)).ln_1p()
    } else if z < 10.0 {
        std_normal_survival(z).ln()
    } else {
        let mut r = 0.0;
        for k in (1..=128u32).rev() {
            r = f64::from(k) / (z + r);
        }
        -0.5 * z * z - 0.5 * LN_2PI - (z + r).ln()
    }
}

/// Standard normal quantile for `p` in (0, 1).
///
/// Starts from the Acklam rational approximation and polishes with Newton:
/// in the central region directly on the CDF, in either tail on the log of
/// the tail probability, which keeps the iteration well conditioned however
/// small the tail is.
///
/// Panics if `p` is outside the open interval (0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "quantile probability must lie in (0, 1), got {p}"
    );
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        -tail_quantile(p)
    } else if p > 1.0 - P_LOW {
        tail_quantile(1.0 - p)
    } else {
        let mut z = acklam_inverse(p);
        for _ in 0..2 {
            let pdf = std_normal_pdf(z);
            if p <= 0.5 {
                z -= (std_normal_cdf(z) - p) / pdf;
            } else {
                z += (std_normal_survival(z) - (1.0 - p)) / pdf;
            }
        }
        z
    }
}

/// Positive `z` with `P(Z > z) = s`, for small `s`. Newton on
/// `log_survival(z) = ln s`; the target function is convex and nearly
/// quadratic in `z`, so a handful of steps reach full precision from the
/// rational starting point.
fn tail_quantile(s: f64) -> f64 {
    let target = s.ln();
    let mut z = -acklam_inverse(s);
    for _ in 0..8 {
        let ls = std_normal_log_survival(z);
        let log_pdf = -0.5 * z * z - 0.5 * LN_2PI;
        let step = (ls - target) * (ls - log_pdf).exp();
        z += step;
        if step.abs() <= 1e-15 * z.abs() {
            break;
        }
    }
    z
}

fn acklam_inverse(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Normal distribution of the transformed life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalKernel {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalKernel {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, DistError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DistError::NonPositiveSigma(sigma));
        }
        Ok(Self { mu, sigma })
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        let z = (y - self.mu) / self.sigma;
        -0.5 * z * z - 0.5 * LN_2PI - self.sigma.ln()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        std_normal_cdf((y - self.mu) / self.sigma)
    }

    pub fn survival(&self, y: f64) -> f64 {
        std_normal_survival((y - self.mu) / self.sigma)
    }

    pub fn log_survival(&self, y: f64) -> f64 {
        std_normal_log_survival((y - self.mu) / self.sigma)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.mu + self.sigma * std_normal_quantile(p)
    }
}

/// Sinh-normal distribution with the scale parameter pinned at 2, so that
/// `exp(y)` is Birnbaum-Saunders. `alpha` controls shape, `mu` is location.
///
/// Density: `(1/(alpha sqrt(2 pi))) cosh(w) exp(-(2/alpha^2) sinh(w)^2)`
/// with `w = (y - mu)/2`. Equivalently, `(2/alpha) sinh(w)` is standard
/// normal, which gives the CDF, survival, and quantile below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinhNormalKernel {
    pub alpha: f64,
    pub mu: f64,
}

impl SinhNormalKernel {
    pub fn new(alpha: f64, mu: f64) -> Result<Self, DistError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DistError::NonPositiveAlpha(alpha));
        }
        Ok(Self { alpha, mu })
    }

    fn std(&self, y: f64) -> f64 {
        (2.0 / self.alpha) * ((y - self.mu) / 2.0).sinh()
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        let w = (y - self.mu) / 2.0;
        // ln cosh(w) = |w| - ln 2 + ln(1 + exp(-2|w|)); the direct form
        // overflows once cosh(w) exceeds the double range.
        let log_cosh = if w.abs() > 20.0 {
            w.abs() - std::f64::consts::LN_2
        } else {
            w.cosh().ln()
        };
        let s = w.sinh();
        -self.alpha.ln() - 0.5 * LN_2PI + log_cosh - (2.0 / (self.alpha * self.alpha)) * s * s
    }

    pub fn cdf(&self, y: f64) -> f64 {
        std_normal_cdf(self.std(y))
    }

    pub fn survival(&self, y: f64) -> f64 {
        std_normal_survival(self.std(y))
    }

    pub fn log_survival(&self, y: f64) -> f64 {
        std_normal_log_survival(self.std(y))
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.mu + 2.0 * (self.alpha * std_normal_quantile(p) / 2.0).asinh()
    }
}

/// Birnbaum-Saunders distribution on the positive half-line. `alpha` is the
/// shape, `mu` the median (it carries the scale role). Support is `y > 0`;
/// the log-density of a non-positive `y` is minus infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirnbaumSaundersKernel {
    pub alpha: f64,
    pub mu: f64,
}

impl BirnbaumSaundersKernel {
    pub fn new(alpha: f64, mu: f64) -> Result<Self, DistError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DistError::NonPositiveAlpha(alpha));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(DistError::NonPositiveMu(mu));
        }
        Ok(Self { alpha, mu })
    }

    fn std(&self, y: f64) -> f64 {
        ((y / self.mu).sqrt() - (self.mu / y).sqrt()) / self.alpha
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let a2 = self.alpha * self.alpha;
        -0.5 * LN_2PI + (y + self.mu).ln()
            - (2.0 * self.alpha).ln()
            - 0.5 * self.mu.ln()
            - 1.5 * y.ln()
            - (y / self.mu + self.mu / y - 2.0) / (2.0 * a2)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        std_normal_cdf(self.std(y))
    }

    pub fn survival(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        std_normal_survival(self.std(y))
    }

    pub fn log_survival(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        std_normal_log_survival(self.std(y))
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let t = self.alpha * std_normal_quantile(p) / 2.0;
        let u = t + (t * t + 1.0).sqrt();
        self.mu * u * u
    }
}

/// Any of the three kernels, for callers that pick the family at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Normal(NormalKernel),
    SinhNormal(SinhNormalKernel),
    BirnbaumSaunders(BirnbaumSaundersKernel),
}

impl Kernel {
    pub fn log_pdf(&self, y: f64) -> f64 {
        match self {
            Kernel::Normal(k) => k.log_pdf(y),
            Kernel::SinhNormal(k) => k.log_pdf(y),
            Kernel::BirnbaumSaunders(k) => k.log_pdf(y),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            Kernel::Normal(k) => k.cdf(y),
            Kernel::SinhNormal(k) => k.cdf(y),
            Kernel::BirnbaumSaunders(k) => k.cdf(y),
        }
    }

    pub fn survival(&self, y: f64) -> f64 {
        match self {
            Kernel::Normal(k) => k.survival(y),
            Kernel::SinhNormal(k) => k.survival(y),
            Kernel::BirnbaumSaunders(k) => k.survival(y),
        }
    }

    pub fn log_survival(&self, y: f64) -> f64 {
        match self {
            Kernel::Normal(k) => k.log_survival(y),
            Kernel::SinhNormal(k) => k.log_survival(y),
            Kernel::BirnbaumSaunders(k) => k.log_survival(y),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Kernel::Normal(k) => k.quantile(p),
            Kernel::SinhNormal(k) => k.quantile(p),
            Kernel::BirnbaumSaunders(k) => k.quantile(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn cdf_basics() {
        assert_abs_diff_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(
            std_normal_cdf(1.96),
            0.975_002_104_851_779_5,
            max_relative = 1e-14
        );
        for &z in &[-3.0, -1.2, 0.0, 0.7, 2.5, 6.0] {
            assert_relative_eq!(
                std_normal_cdf(z) + std_normal_survival(z),
                1.0,
                max_relative = 1e-14
            );
            assert_relative_eq!(
                std_normal_cdf(-z),
                std_normal_survival(z),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn log_survival_matches_direct_log_in_overlap() {
        // erfc stays representable out to z ~ 37, so the continued-fraction
        // branch can be checked against it directly.
        for i in 0..=200 {
            let z = 10.0 + 20.0 * (i as f64) / 200.0;
            let direct = std_normal_survival(z).ln();
            let stable = std_normal_log_survival(z);
            assert_relative_eq!(direct, stable, max_relative = 1e-13);
        }
        // Far past erfc underflow the value must stay finite and ordered.
        let a = std_normal_log_survival(50.0);
        let b = std_normal_log_survival(60.0);
        assert!(a.is_finite() && b.is_finite() && b < a);
        assert_relative_eq!(a, -1254.831_361_139_419_9, max_relative = 1e-12);
    }

    #[test]
    fn log_survival_lower_tail() {
        assert_abs_diff_eq!(std_normal_log_survival(-40.0), 0.0, epsilon = 1e-300);
        assert_relative_eq!(
            std_normal_log_survival(-1.0),
            (1.0 - std_normal_cdf(-1.0)).ln(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn quantile_round_trips() {
        for i in 1..400 {
            let p = i as f64 / 400.0;
            let z = std_normal_quantile(p);
            assert_abs_diff_eq!(std_normal_cdf(z), p, epsilon = 1e-14);
        }
        // Deep tails round-trip in log space, where f64 can still express
        // the tail probability exactly.
        for &p in &[1e-300, 1e-12, 1e-8, 1e-5] {
            let z = std_normal_quantile(p);
            assert!(z < 0.0);
            assert_relative_eq!(
                std_normal_log_survival(-z),
                p.ln(),
                max_relative = 1e-12
            );
        }
        // The symmetric upper quantile agrees up to how well 1 - p is
        // representable: d z / d p = 1/pdf(z).
        for &p in &[1e-12, 1e-8, 1e-5] {
            let z = std_normal_quantile(p);
            let zu = std_normal_quantile(1.0 - p);
            let slack = f64::EPSILON / std_normal_pdf(z) + 1e-9;
            assert_abs_diff_eq!(zu, -z, epsilon = slack);
        }
        assert_relative_eq!(
            std_normal_quantile(0.975),
            1.959_963_984_540_054,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            std_normal_quantile(0.95),
            1.644_853_626_951_472_2,
            max_relative = 1e-13
        );
    }

    #[test]
    #[should_panic(expected = "quantile probability")]
    fn quantile_rejects_endpoints() {
        std_normal_quantile(1.0);
    }

    #[test]
    fn normal_kernel_values() {
        let k = NormalKernel::new(2.0, 0.5).unwrap();
        // Peak density 1/(sigma sqrt(2 pi)).
        assert_relative_eq!(
            k.log_pdf(2.0),
            -(0.5f64.ln()) - 0.5 * LN_2PI,
            epsilon = 1e-14
        );
        assert_relative_eq!(k.quantile(0.5), 2.0, epsilon = 1e-12);
        assert_relative_eq!(k.cdf(k.quantile(0.1)), 0.1, epsilon = 1e-12);
        assert!(NormalKernel::new(0.0, 0.0).is_err());
        assert!(NormalKernel::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn sinh_normal_standardization() {
        let k = SinhNormalKernel::new(1.54, 10.0).unwrap();
        // Median sits at mu, and the transform to a standard normal holds.
        assert_relative_eq!(k.cdf(10.0), 0.5, epsilon = 1e-14);
        let y = 11.3_f64;
        let z = (2.0 / 1.54) * ((y - 10.0) / 2.0).sinh();
        assert_relative_eq!(k.survival(y), std_normal_survival(z), epsilon = 1e-14);
        let q = k.quantile(0.9);
        assert_relative_eq!(k.cdf(q), 0.9, epsilon = 1e-12);
        // log_pdf stays finite and falls away from the peak far out.
        assert!(k.log_pdf(900.0).is_finite() || k.log_pdf(900.0) == f64::NEG_INFINITY);
        assert!(k.log_pdf(60.0) < k.log_pdf(10.0));
    }

    #[test]
    fn birnbaum_saunders_reference_point() {
        // At y = mu the density is 1/(sqrt(2 pi) alpha mu).
        let k = BirnbaumSaundersKernel::new(0.0933, 5.0).unwrap();
        let expect = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 0.0933 * 5.0);
        assert_relative_eq!(k.log_pdf(5.0).exp(), expect, epsilon = 1e-12);
        assert_relative_eq!(k.cdf(5.0), 0.5, epsilon = 1e-14);
        let q = k.quantile(0.25);
        assert_relative_eq!(k.cdf(q), 0.25, epsilon = 1e-12);
        assert_eq!(k.log_pdf(-1.0), f64::NEG_INFINITY);
        assert_eq!(k.survival(0.0), 1.0);
        assert!(BirnbaumSaundersKernel::new(0.1, -2.0).is_err());
    }

    #[test]
    fn bs_and_sinh_normal_are_log_linked() {
        // If N is Birnbaum-Saunders(alpha, mu) then ln N is sinh-normal
        // with location ln mu and the same alpha.
        let bs = BirnbaumSaundersKernel::new(0.4, 1000.0).unwrap();
        let sn = SinhNormalKernel::new(0.4, 1000.0f64.ln()).unwrap();
        for &n in &[200.0, 700.0, 1000.0, 4000.0, 30000.0] {
            assert_relative_eq!(bs.cdf(n), sn.cdf(n.ln()), epsilon = 1e-13);
            // Densities pick up the 1/n Jacobian.
            assert_relative_eq!(
                bs.log_pdf(n),
                sn.log_pdf(n.ln()) - n.ln(),
                epsilon = 1e-11
            );
        }
    }
}
