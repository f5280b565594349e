//! Euler products κ(z), λ(z), the constant `C` of the large-`j` regime, and
//! the main terms of the Selberg–Delange formulas.

use serde::{Deserialize, Serialize};

use super::factor::trial_primes;
use super::sieve::sieve_primes;
use super::OmegaMode;
use crate::error::{Error, Result};
use crate::special::{ln_gamma, PI};

/// Default truncation point `P` of the κ and λ products.
pub const EULER_PRODUCT_LIMIT: u64 = 1_000_000;

/// Truncation point of the product defining `C`.
pub const SELBERG_C_LIMIT: u64 = 10_000_000;

fn primes_up_to(limit: u64) -> std::borrow::Cow<'static, [u64]> {
    if limit <= super::TRIAL_DIVISION_LIMIT {
        let all = trial_primes();
        let end = all.partition_point(|&p| p <= limit);
        std::borrow::Cow::Borrowed(&all[..end])
    } else {
        std::borrow::Cow::Owned(sieve_primes(limit))
    }
}

/// Approximation to `Σ_{p > P} p^{-2}` by `∫_P^∞ dt / (t² ln t) = E_1(ln P)`.
fn prime_square_tail(limit: u64) -> f64 {
    let y = (limit as f64).ln();
    let mut series = 1.0;
    let mut term = 1.0;
    for k in 1..6 {
        term *= -(k as f64) / y;
        series += term;
    }
    (-y).exp() / y * series
}

/// κ(z) for `0 ≤ z < 2` with the product truncated at `P = 10^6` plus the
/// second-order tail `(z² - z)/2 · Σ_{p>P} p^{-2}`.
pub fn kappa(z: f64) -> Result<f64> {
    kappa_truncated(z, EULER_PRODUCT_LIMIT)
}

pub fn kappa_truncated(z: f64, limit: u64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("kappa needs z >= 0, got {z}")));
    }
    if z >= 2.0 {
        return Err(Error::Domain(format!("kappa has poles at 2, 3, ...; z = {z} is outside [0, 2)")));
    }
    let primes = primes_up_to(limit);
    let log_sum: f64 = primes
        .iter()
        .map(|&p| {
            let p = p as f64;
            -(-z / p).ln_1p() + z * (-1.0 / p).ln_1p()
        })
        .sum();
    let tail = 0.5 * (z * z - z) * prime_square_tail(limit);
    Ok((log_sum + tail - ln_gamma(z + 1.0)).exp())
}

/// λ(z) for `z ≥ 0`, truncated like [`kappa`]; tail `(z - z²)/2 · Σ p^{-2}`.
pub fn lambda_fn(z: f64) -> Result<f64> {
    lambda_truncated(z, EULER_PRODUCT_LIMIT)
}

pub fn lambda_truncated(z: f64, limit: u64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("lambda needs finite z >= 0, got {z}")));
    }
    let primes = primes_up_to(limit);
    let log_sum: f64 = primes
        .iter()
        .map(|&p| {
            let p = p as f64;
            (z / (p - 1.0)).ln_1p() + z * (-1.0 / p).ln_1p()
        })
        .sum();
    let tail = 0.5 * (z - z * z) * prime_square_tail(limit);
    Ok((log_sum + tail - ln_gamma(z + 1.0)).exp())
}

/// `C = (1/4) ∏_{p > 2} (1 + 1/(p(p-2)))`, product over `p ≤ 10^7`.
pub fn selberg_constant_c() -> f64 {
    selberg_constant_truncated(SELBERG_C_LIMIT)
}

pub fn selberg_constant_truncated(limit: u64) -> f64 {
    let log_prod: f64 = primes_up_to(limit)
        .iter()
        .skip_while(|&&p| p == 2)
        .map(|&p| {
            let p = p as f64;
            (1.0 / (p * (p - 2.0))).ln_1p()
        })
        .sum();
    0.25 * log_prod.exp()
}

/// Which Selberg–Delange asymptotic to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelbergMode {
    /// Ω, `1 ≤ j ≤ (2-δ) ln ln x`, main term with κ.
    BigOmegaSmallJ,
    /// Ω, `j / ln ln x ∈ (2+δ, A)`, main term `C x ln x / 2^j`.
    BigOmegaLargeJ,
    /// ω, `1 ≤ j ≤ A ln ln x`, main term with λ.
    SmallOmega,
}

impl SelbergMode {
    pub fn omega_mode(self) -> OmegaMode {
        match self {
            SelbergMode::SmallOmega => OmegaMode::SmallOmega,
            _ => OmegaMode::BigOmega,
        }
    }
}

/// The `δ` and `A` that delimit each formula's uniformity range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelbergWindow {
    pub delta: f64,
    pub upper: f64,
}

impl Default for SelbergWindow {
    fn default() -> Self {
        SelbergWindow { delta: 0.1, upper: 4.0 }
    }
}

impl SelbergWindow {
    /// Picks the small-`j` or large-`j` Ω formula for `(x, j)`, if either applies.
    pub fn big_omega_mode(&self, x: u64, j: u32) -> Option<SelbergMode> {
        [SelbergMode::BigOmegaSmallJ, SelbergMode::BigOmegaLargeJ]
            .into_iter()
            .find(|&m| self.check(x, j, m).is_ok())
    }

    pub fn check(&self, x: u64, j: u32, mode: SelbergMode) -> Result<()> {
        if x < 3 {
            return Err(Error::Hypothesis(format!("Selberg formulas need x >= 3, got {x}")));
        }
        let lll = (x as f64).ln().ln();
        let jf = j as f64;
        match mode {
            SelbergMode::BigOmegaSmallJ if j < 1 || jf > (2.0 - self.delta) * lll => Err(Error::Hypothesis(format!(
                "small-j formula needs 1 <= j <= (2 - delta) ln ln x = {:.4}, got j = {j}",
                (2.0 - self.delta) * lll
            ))),
            SelbergMode::BigOmegaLargeJ if !(jf / lll > 2.0 + self.delta && jf / lll < self.upper) => {
                Err(Error::Hypothesis(format!(
                    "large-j formula needs j / ln ln x in ({}, {}), got {:.4}",
                    2.0 + self.delta,
                    self.upper,
                    jf / lll
                )))
            }
            SelbergMode::SmallOmega if j < 1 || jf > self.upper * lll => Err(Error::Hypothesis(format!(
                "omega formula needs 1 <= j <= A ln ln x = {:.4}, got j = {j}",
                self.upper * lll
            ))),
            _ => Ok(()),
        }
    }
}

/// Main term of the Selberg–Delange approximation to `ν_j(x)` (or
/// `ν°_j(x)`), without the error factor.
pub fn selberg_approx(x: u64, j: u32, mode: SelbergMode, window: &SelbergWindow) -> Result<f64> {
    window.check(x, j, mode)?;
    let xf = x as f64;
    let lx = xf.ln();
    let lll = lx.ln();
    match mode {
        SelbergMode::BigOmegaLargeJ => Ok(selberg_constant_c() * xf * lx / 2f64.powi(j as i32)),
        SelbergMode::BigOmegaSmallJ | SelbergMode::SmallOmega => {
            let k = (j - 1) as f64;
            let z = k / lll;
            let euler = if mode == SelbergMode::SmallOmega { lambda_fn(z)? } else { kappa(z)? };
            let poisson = (k * lll.ln() - ln_gamma(k + 1.0)).exp();
            Ok(xf / lx * poisson * euler)
        }
    }
}

/// `θ' = 1 - θ(1 - ln θ)`.
pub fn theta_prime(theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Parameter(format!("theta must be positive, got {theta}")));
    }
    Ok(1.0 - theta * (1.0 - theta.ln()))
}

/// How the Poisson index `k ~ θ ln ln x` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonIndex {
    /// `k = round(θ ln ln x)`, an integer.
    Rounded,
    /// `k = θ ln ln x` exactly, with `k!` read as `Γ(k + 1)`.
    Continuous,
}

/// Ratio of `(x/ln x)(ln ln x)^k / k!` to its Stirling form
/// `x / ((ln x)^{θ'} √(2πθ ln ln x))`.
pub fn stirling_poisson_ratio(theta: f64, x: f64, index: PoissonIndex) -> Result<f64> {
    let tp = theta_prime(theta)?;
    if !(x > std::f64::consts::E) {
        return Err(Error::Domain(format!("need x > e so that ln ln x > 0, got {x}")));
    }
    let lx = x.ln();
    let lll = lx.ln();
    let k = match index {
        PoissonIndex::Rounded => (theta * lll).round(),
        PoissonIndex::Continuous => theta * lll,
    };
    let log_exact = -lx.ln() + k * lll.ln() - ln_gamma(k + 1.0);
    let log_stirling = -tp * lx.ln() - 0.5 * (2.0 * PI * theta * lll).ln();
    Ok((log_exact - log_stirling).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_lambda_special_values() {
        for z in [0.0, 1.0] {
            assert!((kappa(z).unwrap() - 1.0).abs() < 1e-8, "kappa({z})");
            assert!((lambda_fn(z).unwrap() - 1.0).abs() < 1e-8, "lambda({z})");
        }
        assert!(kappa(2.0).is_err());
        assert!(kappa(-0.1).is_err());
        assert!(lambda_fn(-0.1).is_err());
    }

    #[test]
    fn truncation_stability() {
        let k5 = kappa_truncated(0.5, 100_000).unwrap();
        let k6 = kappa_truncated(0.5, 1_000_000).unwrap();
        assert!((k5 - k6).abs() < 1e-6);
        let l5 = lambda_truncated(2.0, 100_000).unwrap();
        let l6 = lambda_truncated(2.0, 1_000_000).unwrap();
        assert!(l6.is_finite() && (l5 - l6).abs() < 1e-6);
    }

    #[test]
    fn tail_correction_improves_truncation() {
        // Without the tail the two truncations differ by ~|z² - z|/(2 P ln P).
        let a = kappa_truncated(1.5, 100_000).unwrap();
        let b = kappa_truncated(1.5, 2_000_000).unwrap();
        assert!((a - b).abs() / b < 1e-9, "{a} {b}");
    }

    #[test]
    fn selberg_constant_partial_products() {
        assert!((selberg_constant_truncated(3) - 1.0 / 3.0).abs() < 1e-15);
        let mut prev = 0.0;
        for limit in [3, 10, 100, 1000, 100_000] {
            let c = selberg_constant_truncated(limit);
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn theta_prime_values() {
        assert_eq!(theta_prime(1.0).unwrap(), 0.0);
        assert!((theta_prime(2.0).unwrap() - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((theta_prime(0.5).unwrap() - (0.5 - 0.5 * 2f64.ln())).abs() < 1e-15);
        assert!(theta_prime(0.0).is_err());
    }

    #[test]
    fn selberg_windows() {
        let w = SelbergWindow::default();
        assert!(selberg_approx(1_000_000, 1, SelbergMode::SmallOmega, &w).is_ok());
        assert!(selberg_approx(1_000_000, 9, SelbergMode::BigOmegaSmallJ, &w).is_err());
        assert!(selberg_approx(1_000_000, 2, SelbergMode::BigOmegaLargeJ, &w).is_err());
        assert!(selberg_approx(2, 1, SelbergMode::SmallOmega, &w).is_err());
        assert!(selberg_approx(1_000_000, 0, SelbergMode::SmallOmega, &w).is_err());
        assert_eq!(w.big_omega_mode(1_000_000, 2), Some(SelbergMode::BigOmegaSmallJ));
        assert_eq!(w.big_omega_mode(1_000_000, 9), Some(SelbergMode::BigOmegaLargeJ));
        assert_eq!(w.big_omega_mode(1_000_000, 5), None);
    }

    #[test]
    fn main_term_examples() {
        let w = SelbergWindow::default();
        let x = 1_000_000u64;
        let v = selberg_approx(x, 1, SelbergMode::SmallOmega, &w).unwrap();
        assert!((v - 1e6 / 1e6f64.ln()).abs() < 1e-6);
        assert!((v - 72_382.4).abs() < 1.0);
        let large = selberg_approx(x, 9, SelbergMode::BigOmegaLargeJ, &w).unwrap();
        assert!((large - selberg_constant_c() * 1e6 * 1e6f64.ln() / 512.0).abs() < 1e-6);
    }

    #[test]
    fn stirling_ratio_band_and_trend() {
        for theta in [0.5, 1.0, 2.0] {
            let mut prev_gap = f64::INFINITY;
            for x in [1e6, 1e8, 1e10] {
                let r = stirling_poisson_ratio(theta, x, PoissonIndex::Continuous).unwrap();
                assert!((0.8..=1.25).contains(&r), "theta {theta}, x {x}: {r}");
                let gap = (r - 1.0).abs();
                assert!(gap < prev_gap, "theta {theta}, x {x}");
                prev_gap = gap;
            }
        }
        // Integer rounding of k oscillates at desk scale.
        let r = stirling_poisson_ratio(0.5, 1e8, PoissonIndex::Rounded).unwrap();
        assert!((r - 0.748_199).abs() < 1e-5, "{r}");
        let r1 = stirling_poisson_ratio(1.0, 1e10, PoissonIndex::Rounded).unwrap();
        assert!((r1 - 0.991_604).abs() < 1e-5, "{r1}");
    }
}
