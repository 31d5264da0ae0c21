//! Semi-closed-form European prices under the Heston model.
//!
//! Standard two-probability characteristic-function representation with
//! the numerically stable branch choice: the call is
//! `C = S e^{-q tau} P1 - K e^{-r tau} P2`, each probability an integral
//! of the characteristic function, evaluated by adaptive quadrature; puts
//! follow from parity with continuous rates.

use num_complex::Complex64;

use crate::error::{PricerError, Result};
use crate::models::{ModelKind, ModelSpec, OptionRight};
use crate::quad::adaptive_quadrature;

/// Integrand of the probability `P_j` at transform variable `u`.
#[allow(clippy::too_many_arguments)]
fn probability_integrand(
    u: f64,
    j: u8,
    ln_moneyness: f64,
    tau: f64,
    v0: f64,
    kappa: f64,
    theta_bar: f64,
    sigma: f64,
    rho: f64,
) -> f64 {
    let i = Complex64::new(0.0, 1.0);
    let iu = i * u;
    let (uj, bj) = if j == 1 { (0.5, kappa - rho * sigma) } else { (-0.5, kappa) };
    let a = bj - rho * sigma * iu;
    let d = (a * a - sigma * sigma * (2.0 * uj * iu - u * u)).sqrt();
    // Stable branch: work with g2 = (a - d)/(a + d) so |g2| <= 1.
    let g2 = (a - d) / (a + d);
    let e_dt = (-d * tau).exp();
    let log_term = ((1.0 - g2 * e_dt) / (1.0 - g2)).ln();
    let big_c = kappa * theta_bar / (sigma * sigma) * ((a - d) * tau - 2.0 * log_term);
    let big_d = (a - d) / (sigma * sigma) * (1.0 - e_dt) / (1.0 - g2 * e_dt);
    let f = (big_c + big_d * v0 + iu * ln_moneyness).exp();
    (f / iu).re
}

/// European price under the SV model via the characteristic function.
///
/// `spec` must be an SV European contract; `s` and `y` are the spot and the
/// instantaneous variance, `tau` the time to expiry.
pub fn heston_european(spec: &ModelSpec, s: f64, y: f64, tau: f64) -> Result<f64> {
    if spec.kind != ModelKind::Sv {
        return Err(PricerError::Usage("the semi-closed form covers the SV model only".into()));
    }
    if tau <= 0.0 {
        return Ok(spec.payoff().value(s));
    }
    let k = spec.strike;
    // Forward log-moneyness folds the deterministic drift into the
    // integrand, which improves the decay of the oscillatory part.
    let ln_m = (s / k).ln() + (spec.r - spec.q) * tau;
    let (kappa, theta_bar, sigma, rho) = (spec.xi, spec.eta, spec.theta, spec.rho);

    let mut probs = [0.0f64; 2];
    for (slot, j) in probs.iter_mut().zip([1u8, 2]) {
        let f = |u: f64| probability_integrand(u, j, ln_m, tau, y, kappa, theta_bar, sigma, rho);
        // The integrand decays exponentially; sweep fixed panels until a
        // panel stops contributing.
        let mut total = 0.0;
        let mut lo = 0.0;
        let mut converged = false;
        for hi in [1.0, 5.0, 20.0, 60.0, 150.0, 400.0, 1000.0, 2500.0] {
            let part = adaptive_quadrature(&f, lo, hi, 1e-11, 40)?;
            total += part;
            lo = hi;
            if hi > 20.0 && part.abs() < 1e-12 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(PricerError::Oracle(
                "characteristic-function integral did not decay by u = 2500".into(),
            ));
        }
        *slot = 0.5 + total / std::f64::consts::PI;
    }

    let df_r = (-spec.r * tau).exp();
    let df_q = (-spec.q * tau).exp();
    let call = s * df_q * probs[0] - k * df_r * probs[1];
    Ok(match spec.right {
        OptionRight::Call => call,
        OptionRight::Put => call - s * df_q + k * df_r,
    })
}

/// Black-Scholes price with constant volatility; limit oracle.
pub fn black_scholes(right: OptionRight, s: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64) -> f64 {
    use crate::assembly::jump::normal_cdf;
    if tau <= 0.0 || sigma <= 0.0 {
        let fwd = s * ((r - q) * tau).exp();
        let intrinsic = match right {
            OptionRight::Call => (fwd - k).max(0.0),
            OptionRight::Put => (k - fwd).max(0.0),
        };
        return intrinsic * (-r * tau).exp();
    }
    let st = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * tau) / st;
    let d2 = d1 - st;
    let call = s * (-q * tau).exp() * normal_cdf(d1) - k * (-r * tau).exp() * normal_cdf(d2);
    match right {
        OptionRight::Call => call,
        OptionRight::Put => call - s * (-q * tau).exp() + k * (-r * tau).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OptionStyle;

    fn test1_spec(right: OptionRight) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Sv,
            r: 0.1,
            q: 0.0,
            xi: 5.0,
            eta: 0.16,
            theta: 0.9,
            rho: 0.1,
            jump: None,
            strike: 10.0,
            maturity: 0.25,
            right,
            style: OptionStyle::European,
        }
    }

    #[test]
    fn zero_tau_returns_payoff() {
        let spec = test1_spec(OptionRight::Put);
        assert_eq!(heston_european(&spec, 8.0, 0.0625, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn put_call_parity_holds() {
        let call = test1_spec(OptionRight::Call);
        let put = test1_spec(OptionRight::Put);
        for &s in &[8.0, 9.0, 10.0, 11.0, 12.0] {
            for &y in &[0.0625, 0.25] {
                let c = heston_european(&call, s, y, 0.25).unwrap();
                let p = heston_european(&put, s, y, 0.25).unwrap();
                let parity = s - 10.0 * (-0.1f64 * 0.25).exp();
                assert!(
                    (c - p - parity).abs() < 1e-9,
                    "s={s} y={y}: C-P = {}, S-Ke^-rt = {parity}",
                    c - p
                );
            }
        }
    }

    #[test]
    fn pinned_variance_approaches_black_scholes() {
        // Strong mean reversion with tiny vol-of-vol pins the variance at
        // its long-run level.
        let mut spec = test1_spec(OptionRight::Put);
        spec.xi = 400.0;
        spec.theta = 1e-3;
        spec.eta = 0.16;
        let got = heston_european(&spec, 10.0, 0.16, 0.25).unwrap();
        let bs = black_scholes(OptionRight::Put, 10.0, 10.0, 0.1, 0.0, 0.4, 0.25);
        assert!((got - bs).abs() < 1e-4, "{got} vs {bs}");
    }

    #[test]
    fn monotone_in_spot_and_positive() {
        let spec = test1_spec(OptionRight::Put);
        let mut last = f64::INFINITY;
        for &s in &[6.0, 8.0, 10.0, 12.0, 16.0] {
            let v = heston_european(&spec, s, 0.0625, 0.25).unwrap();
            assert!(v > 0.0 && v < last, "s={s}: {v}");
            last = v;
        }
    }
}
