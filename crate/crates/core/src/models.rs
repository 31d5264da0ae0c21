//! Financial model definitions: SV (Heston), SVJ (Bates/Merton jumps) and
//! SVCJ (correlated jumps in returns and variance), together with the jump
//! densities, payoffs and the closed-form scalars entering the operators.

use crate::error::{PricerError, Result};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Which risk-neutral dynamics drive the underlying.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Heston stochastic volatility, no jumps.
    Sv,
    /// Stochastic volatility with lognormal jumps in returns (Bates).
    Svj,
    /// Stochastic volatility with correlated jumps in returns and variance.
    Svcj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionRight {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionStyle {
    European,
    American,
}

/// Exponentially distributed variance jump, correlated with the return jump
/// through a mean shift `gamma + rho_j * z_v` in the log return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceJump {
    /// Jump correlation between returns and variance.
    pub rho_j: f64,
    /// Mean of the exponential variance-jump size, `nu > 0`.
    pub nu: f64,
}

/// Compound-Poisson jump specification shared by SVJ and SVCJ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpLaw {
    /// Jump intensity (1/year).
    pub lambda: f64,
    /// Location of the log jump size.
    pub gamma: f64,
    /// Scale of the log jump size, `delta > 0`.
    pub delta: f64,
    /// Present for SVCJ only.
    pub variance_jump: Option<VarianceJump>,
}

impl JumpLaw {
    pub fn merton(lambda: f64, gamma: f64, delta: f64) -> Self {
        JumpLaw { lambda, gamma, delta, variance_jump: None }
    }

    pub fn correlated(lambda: f64, gamma: f64, delta: f64, rho_j: f64, nu: f64) -> Self {
        JumpLaw { lambda, gamma, delta, variance_jump: Some(VarianceJump { rho_j, nu }) }
    }
}

/// Full parameter set of one pricing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Risk-free rate (1/year).
    pub r: f64,
    /// Continuous dividend yield (1/year).
    pub q: f64,
    /// Mean-reversion rate of the variance.
    pub xi: f64,
    /// Long-run variance level.
    pub eta: f64,
    /// Volatility of variance.
    pub theta: f64,
    /// Correlation of the two Brownian drivers, in [-1, 1].
    pub rho: f64,
    /// Jump law; required for SVJ/SVCJ, absent for SV.
    pub jump: Option<JumpLaw>,
    /// Strike price.
    pub strike: f64,
    /// Maturity (years).
    pub maturity: f64,
    pub right: OptionRight,
    pub style: OptionStyle,
}

impl ModelSpec {
    /// Checks every documented invariant; call after building a spec by hand.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PricerError::Parameter(m));
        if !(self.xi > 0.0) {
            return err(format!("mean-reversion rate xi must be > 0, got {}", self.xi));
        }
        if !(self.eta > 0.0) {
            return err(format!("long-run variance eta must be > 0, got {}", self.eta));
        }
        if !(self.theta > 0.0) {
            return err(format!("vol-of-vol theta must be > 0, got {}", self.theta));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return err(format!("correlation rho must lie in [-1,1], got {}", self.rho));
        }
        if !(self.strike > 0.0) {
            return err(format!("strike must be > 0, got {}", self.strike));
        }
        if !(self.maturity > 0.0) {
            return err(format!("maturity must be > 0, got {}", self.maturity));
        }
        match (self.kind, &self.jump) {
            (ModelKind::Sv, Some(_)) => return err("SV model must not carry a jump law".into()),
            (ModelKind::Svj | ModelKind::Svcj, None) => {
                return err("SVJ/SVCJ models require a jump law".into())
            }
            (ModelKind::Svj, Some(j)) => {
                if j.variance_jump.is_some() {
                    return err("SVJ jump law must not carry a variance jump".into());
                }
                validate_jump(j)?;
            }
            (ModelKind::Svcj, Some(j)) => {
                let vj = j
                    .variance_jump
                    .ok_or_else(|| PricerError::Parameter("SVCJ requires a variance jump".into()))?;
                if !(vj.nu > 0.0) {
                    return err(format!("variance-jump mean nu must be > 0, got {}", vj.nu));
                }
                if !(1.0 - vj.nu * vj.rho_j > 0.0) {
                    return err(format!(
                        "SVCJ requires 1 - nu*rho_j > 0 so the expected jump size is finite \
                         (nu={}, rho_j={})",
                        vj.nu, vj.rho_j
                    ));
                }
                validate_jump(j)?;
            }
            (ModelKind::Sv, None) => {}
        }
        Ok(())
    }

    pub fn payoff(&self) -> Payoff {
        Payoff { right: self.right, strike: self.strike }
    }

    pub fn lambda(&self) -> f64 {
        self.jump.map_or(0.0, |j| j.lambda)
    }

    /// Drift correction `r - q - lambda*kappa` used by the convection vector.
    /// For SVCJ the correlated expected jump size replaces the plain one.
    pub fn drift(&self) -> Result<f64> {
        let comp = match self.jump {
            None => 0.0,
            Some(j) => j.lambda * expected_jump_size(self.kind, &j)?,
        };
        Ok(self.r - self.q - comp)
    }
}

fn validate_jump(j: &JumpLaw) -> Result<()> {
    if j.lambda < 0.0 {
        return Err(PricerError::Parameter(format!(
            "jump intensity lambda must be >= 0, got {}",
            j.lambda
        )));
    }
    if !(j.delta > 0.0) {
        return Err(PricerError::Parameter(format!(
            "log-jump scale delta must be > 0, got {}",
            j.delta
        )));
    }
    Ok(())
}

/// Vanilla terminal payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub right: OptionRight,
    pub strike: f64,
}

impl Payoff {
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self.right {
            OptionRight::Call => (s - self.strike).max(0.0),
            OptionRight::Put => (self.strike - s).max(0.0),
        }
    }
}

/// Merton lognormal jump density
/// `f(x) = exp(-(ln x - gamma)^2 / (2 delta^2)) / (sqrt(2 pi) delta x)`.
pub fn merton_density(x: f64, law: &JumpLaw) -> Result<f64> {
    if !(x > 0.0) {
        return Err(PricerError::Domain(format!(
            "merton density requires a positive jump multiplier, got {x}"
        )));
    }
    Ok(merton_density_unchecked(x, law.gamma, law.delta))
}

/// Same density without the domain check, with an explicit location so the
/// SVCJ machinery can shift `gamma` by `rho_j * z_v`.
#[inline]
pub(crate) fn merton_density_unchecked(x: f64, gamma: f64, delta: f64) -> f64 {
    let t = (x.ln() - gamma) / delta;
    (-0.5 * t * t).exp() / (SQRT_2PI * delta * x)
}

/// Bivariate SVCJ jump density
/// `f(z_s, z_v) = exp(-z_v/nu - (ln z_s - gamma - rho_j z_v)^2/(2 delta^2))
///               / (sqrt(2 pi) z_s delta nu)`.
pub fn svcj_density(z_s: f64, z_v: f64, law: &JumpLaw) -> Result<f64> {
    if !(z_s > 0.0) {
        return Err(PricerError::Domain(format!(
            "svcj density requires a positive return-jump multiplier, got {z_s}"
        )));
    }
    if z_v < 0.0 {
        return Err(PricerError::Domain(format!(
            "svcj density requires a nonnegative variance jump, got {z_v}"
        )));
    }
    let vj = law
        .variance_jump
        .ok_or_else(|| PricerError::Usage("svcj density needs a variance jump law".into()))?;
    let t = (z_s.ln() - law.gamma - vj.rho_j * z_v) / law.delta;
    Ok((-z_v / vj.nu - 0.5 * t * t).exp() / (SQRT_2PI * z_s * law.delta * vj.nu))
}

/// Expected relative jump size.
///
/// SVJ: `kappa = exp(gamma + delta^2/2) - 1`.
/// SVCJ: `kappa_s = (1 - nu*rho_j)^{-1} exp(gamma + delta^2/2) - 1`.
pub fn expected_jump_size(kind: ModelKind, law: &JumpLaw) -> Result<f64> {
    let base = (law.gamma + 0.5 * law.delta * law.delta).exp();
    match kind {
        ModelKind::Sv => Err(PricerError::Usage("SV model carries no jumps".into())),
        ModelKind::Svj => Ok(base - 1.0),
        ModelKind::Svcj => {
            let vj = law.variance_jump.ok_or_else(|| {
                PricerError::Usage("SVCJ expected jump size needs a variance jump".into())
            })?;
            let denom = 1.0 - vj.nu * vj.rho_j;
            if denom <= 0.0 {
                return Err(PricerError::Parameter(format!(
                    "SVCJ expected jump size diverges: 1 - nu*rho_j = {denom}"
                )));
            }
            Ok(base / denom - 1.0)
        }
    }
}

/// Dirichlet data at the asset-price boundaries `s = 0` and `s = s_max`,
/// at time-to-expiry `tau`.
///
/// Calls vanish at zero and behave like `s - K` at the cap. Puts are worth
/// the (American) strike or the (European) discounted strike at zero and
/// nothing at the cap.
pub fn boundary_values(spec: &ModelSpec, s_max: f64, tau: f64) -> (f64, f64) {
    match (spec.right, spec.style) {
        (OptionRight::Call, _) => (0.0, s_max - spec.strike),
        (OptionRight::Put, OptionStyle::American) => (spec.strike, 0.0),
        (OptionRight::Put, OptionStyle::European) => (spec.strike * (-spec.r * tau).exp(), 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_quadrature;

    fn salmi_law() -> JumpLaw {
        // Canonical Bates test parameters.
        JumpLaw::merton(0.2, -0.5, 0.4)
    }

    fn svcj_law() -> JumpLaw {
        JumpLaw::correlated(0.2, -0.5, 0.2, -0.5, 0.2)
    }

    #[test]
    fn merton_density_normalizes() {
        let law = salmi_law();
        // Lognormal support is effectively [exp(gamma - 10 delta), exp(gamma + 10 delta)].
        let lo = (law.gamma - 12.0 * law.delta).exp();
        let hi = (law.gamma + 12.0 * law.delta).exp();
        let mass =
            adaptive_quadrature(&|x| merton_density(x, &law).unwrap(), lo, hi, 1e-12, 40).unwrap();
        assert!((mass - 1.0).abs() < 1e-8, "mass = {mass}");
    }

    #[test]
    fn merton_density_vanishes_at_origin() {
        let law = JumpLaw::merton(0.0, 0.0, 1.0);
        assert!(merton_density(1e-12, &law).unwrap() < 1e-20);
        assert!(merton_density(0.0, &law).is_err());
        assert!(merton_density(-1.0, &law).is_err());
    }

    #[test]
    fn merton_density_peak_value() {
        // At x = exp(gamma) the exponent vanishes: f = 1/(sqrt(2 pi) delta x).
        let law = salmi_law();
        let x = (-0.5f64).exp();
        let expected = 1.0 / (SQRT_2PI * 0.4 * x);
        assert!((expected - 1.644_361_56).abs() < 1e-6);
        assert!((merton_density(x, &law).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn svcj_density_normalizes() {
        let law = svcj_law();
        let nu = 0.2;
        // Integrate z_v analytically-sized slabs with the adaptive rule on z_s.
        let inner = |z_v: f64| {
            let lo = (law.gamma + (-0.5f64) * z_v - 12.0 * law.delta).exp().min(1e-4);
            let hi = (law.gamma + 12.0 * law.delta).exp() + 1.0;
            adaptive_quadrature(&|z_s| svcj_density(z_s, z_v, &law).unwrap(), lo, hi, 1e-10, 40)
                .unwrap()
        };
        let mass = adaptive_quadrature(&inner, 0.0, 30.0 * nu, 1e-9, 40).unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn svcj_density_factorizes_when_uncorrelated() {
        let mut law = svcj_law();
        law.variance_jump = Some(VarianceJump { rho_j: 0.0, nu: 0.2 });
        let merton_part = JumpLaw::merton(law.lambda, law.gamma, law.delta);
        for &(zs, zv) in &[(0.5, 0.1), (0.7, 0.4), (1.2, 0.01), (0.3, 1.3)] {
            let joint = svcj_density(zs, zv, &law).unwrap();
            let product =
                merton_density(zs, &merton_part).unwrap() * (-zv / 0.2f64).exp() / 0.2;
            assert!((joint - product).abs() <= 1e-12 * product.max(1.0));
        }
    }

    #[test]
    fn svcj_variance_marginal_mean_is_nu() {
        let law = svcj_law();
        let zs_mean = |z_v: f64| {
            let lo = 1e-6;
            let hi = 8.0;
            adaptive_quadrature(&|z_s| svcj_density(z_s, z_v, &law).unwrap(), lo, hi, 1e-10, 40)
                .unwrap()
                * z_v
        };
        let mean = adaptive_quadrature(&zs_mean, 0.0, 8.0, 1e-9, 40).unwrap();
        assert!((mean - 0.2).abs() < 1e-6, "mean = {mean}");
    }

    #[test]
    fn expected_jump_size_degenerate_is_zero() {
        let law = JumpLaw::merton(1.0, 0.0, 0.0);
        assert_eq!(expected_jump_size(ModelKind::Svj, &law).unwrap(), 0.0);
    }

    #[test]
    fn expected_jump_size_closed_forms() {
        let kappa = expected_jump_size(ModelKind::Svj, &salmi_law()).unwrap();
        assert!((kappa - ((-0.42f64).exp() - 1.0)).abs() < 1e-15);
        assert!((kappa + 0.342_952_6).abs() < 1e-6);

        let kappa_s = expected_jump_size(ModelKind::Svcj, &svcj_law()).unwrap();
        assert!((kappa_s - ((-0.48f64).exp() / 1.1 - 1.0)).abs() < 1e-15);
        assert!((kappa_s + 0.437_469_6).abs() < 1e-6);
    }

    #[test]
    fn expected_jump_size_matches_quadrature_of_definition() {
        // kappa = \int (z - 1) f(z) dz for the Merton law.
        let law = salmi_law();
        let lo = (law.gamma - 14.0 * law.delta).exp();
        let hi = (law.gamma + 14.0 * law.delta).exp();
        let integral = adaptive_quadrature(
            &|z| (z - 1.0) * merton_density(z, &law).unwrap(),
            lo,
            hi,
            1e-12,
            44,
        )
        .unwrap();
        let kappa = expected_jump_size(ModelKind::Svj, &law).unwrap();
        assert!((integral - kappa).abs() < 1e-6, "{integral} vs {kappa}");
    }

    #[test]
    fn expected_jump_size_rejects_divergent_svcj() {
        let law = JumpLaw::correlated(0.2, -0.5, 0.2, 2.0, 0.6);
        assert!(expected_jump_size(ModelKind::Svcj, &law).is_err());
    }

    #[test]
    fn boundary_values_per_contract() {
        let mut spec = ModelSpec {
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
            right: OptionRight::Call,
            style: OptionStyle::American,
        };
        assert_eq!(boundary_values(&spec, 40.0, 0.1), (0.0, 30.0));

        spec.right = OptionRight::Put;
        assert_eq!(boundary_values(&spec, 40.0, 0.17), (10.0, 0.0));

        spec.style = OptionStyle::European;
        let (left, right) = boundary_values(&spec, 40.0, 0.25);
        assert!((left - 10.0 * (-0.025f64).exp()).abs() < 1e-12);
        assert!((left - 9.753_099_1).abs() < 1e-6);
        assert_eq!(right, 0.0);
    }

    #[test]
    fn payoff_shape() {
        let p = Payoff { right: OptionRight::Put, strike: 10.0 };
        assert_eq!(p.value(0.0), 10.0);
        assert_eq!(p.value(10.0), 0.0);
        assert_eq!(p.value(25.0), 0.0);
        // Convexity and Lipschitz-1 along a sample of points.
        let xs: Vec<f64> = (0..200).map(|i| 0.2 * i as f64).collect();
        for w in xs.windows(3) {
            let (a, b, c) = (p.value(w[0]), p.value(w[1]), p.value(w[2]));
            assert!(b <= 0.5 * (a + c) + 1e-12);
            assert!((b - a).abs() <= (w[1] - w[0]) + 1e-12);
        }
    }

    #[test]
    fn validate_catches_mismatched_jump_laws() {
        let mut spec = ModelSpec {
            kind: ModelKind::Svj,
            r: 0.03,
            q: 0.0,
            xi: 2.0,
            eta: 0.04,
            theta: 0.25,
            rho: -0.5,
            jump: None,
            strike: 100.0,
            maturity: 0.5,
            right: OptionRight::Put,
            style: OptionStyle::European,
        };
        assert!(spec.validate().is_err());
        spec.jump = Some(salmi_law());
        assert!(spec.validate().is_ok());
        spec.kind = ModelKind::Sv;
        assert!(spec.validate().is_err());
        spec.kind = ModelKind::Svcj;
        assert!(spec.validate().is_err());
        spec.jump = Some(svcj_law());
        assert!(spec.validate().is_ok());
    }
}
