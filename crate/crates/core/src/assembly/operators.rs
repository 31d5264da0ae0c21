//! Scalar coefficient kernels of the local weak form.
//!
//! After the divergence theorem moves every derivative off the trial
//! function, each sub-domain row needs four scalar kernels: an interior
//! reaction-like kernel `M` multiplying the shape values, a boundary kernel
//! `N` multiplying shape values on the sub-domain boundary, and two boundary
//! flux kernels `I`, `Theta` multiplying the x- and z-derivatives of the
//! shape functions. All are closed forms in the sinh-map derivatives.

use crate::models::ModelSpec;
use crate::transform::SinhMap;

/// Model scalars the kernels need, pulled out of a [`ModelSpec`].
#[derive(Debug, Clone, Copy)]
pub struct OpScalars {
    /// `r - q - lambda * kappa` (kappa_s for SVCJ).
    pub drift: f64,
    pub r: f64,
    pub lambda: f64,
    pub xi: f64,
    pub eta: f64,
    pub theta: f64,
    pub rho: f64,
}

impl OpScalars {
    pub fn from_spec(spec: &ModelSpec) -> crate::error::Result<Self> {
        Ok(OpScalars {
            drift: spec.drift()?,
            r: spec.r,
            lambda: spec.lambda(),
            xi: spec.xi,
            eta: spec.eta,
            theta: spec.theta,
            rho: spec.rho,
        })
    }

    /// Reaction coefficient `r + lambda` multiplying the mass rows inside
    /// the steady part of the system.
    #[inline]
    pub fn reaction(&self) -> f64 {
        self.r + self.lambda
    }
}

/// Price-direction map data at one quadrature abscissa.
#[derive(Debug, Clone, Copy)]
pub struct XFactors {
    pub s: f64,
    pub s1: f64,
    /// `s/s'`.
    pub g1: f64,
    /// `(s/s')' = 1 - s s''/s'^2`.
    pub g1p: f64,
    /// `s^2 s''/s'^3`.
    pub curv: f64,
    /// `d/dx (s^2 s''/s'^3)`.
    pub curv_p: f64,
}

impl XFactors {
    pub fn at(map: &SinhMap, x: f64) -> Self {
        let s = map.inverse(x);
        let s1 = map.d1(x);
        let s2 = map.d2(x);
        let s3 = map.d3(x);
        let g1 = s / s1;
        let g1p = 1.0 - s * s2 / (s1 * s1);
        let curv = s * s * s2 / (s1 * s1 * s1);
        let curv_p = 2.0 * s * s2 / (s1 * s1) + s * s * s3 / (s1 * s1 * s1)
            - 3.0 * s * s * s2 * s2 / (s1 * s1 * s1 * s1);
        XFactors { s, s1, g1, g1p, curv, curv_p }
    }
}

/// Variance-direction map data at one quadrature abscissa.
#[derive(Debug, Clone, Copy)]
pub struct ZFactors {
    pub y: f64,
    pub y1: f64,
    /// `y/y'`.
    pub q1: f64,
    /// `(y/y')'`.
    pub q1p: f64,
    /// `(eta - y)/y'`.
    pub e1: f64,
    /// `((eta - y)/y')'`.
    pub e1p: f64,
    /// `y y''/y'^3`.
    pub curv: f64,
    /// `d/dz (y y''/y'^3)`.
    pub curv_p: f64,
    /// `y''/y'^2 = -(1/y')'`.
    pub inv_y1_neg_p: f64,
}

impl ZFactors {
    pub fn at(map: &SinhMap, eta: f64, z: f64) -> Self {
        let y = map.inverse(z);
        let y1 = map.d1(z);
        let y2 = map.d2(z);
        let y3 = map.d3(z);
        let q1 = y / y1;
        let q1p = 1.0 - y * y2 / (y1 * y1);
        let e1 = (eta - y) / y1;
        let e1p = -1.0 - (eta - y) * y2 / (y1 * y1);
        let curv = y * y2 / (y1 * y1 * y1);
        let curv_p =
            y2 / (y1 * y1) + y * y3 / (y1 * y1 * y1) - 3.0 * y * y2 * y2 / (y1 * y1 * y1 * y1);
        ZFactors { y, y1, q1, q1p, e1, e1p, curv, curv_p, inv_y1_neg_p: y2 / (y1 * y1) }
    }
}

/// Interior kernel `M`: multiplies shape values over the sub-domain area.
#[inline]
pub fn kernel_m(c: &OpScalars, fx: &XFactors, fz: &ZFactors) -> f64 {
    c.drift * fx.g1p + c.xi * fz.e1p - fz.y * fx.g1p
        + 0.5 * fz.y * fx.curv_p
        + 0.5 * c.theta * c.theta * (fz.inv_y1_neg_p + fz.curv_p)
        - c.rho * c.theta * fx.g1p * fz.q1p
}

/// Boundary kernel `N`: multiplies shape values along the sub-domain
/// boundary with outward normal `(nu1, nu2)`.
#[inline]
pub fn kernel_n(c: &OpScalars, fx: &XFactors, fz: &ZFactors, nu1: f64, nu2: f64) -> f64 {
    let n1 = -c.drift * fx.g1 + fz.y * (fx.g1 - 0.5 * fx.curv) + c.rho * c.theta * fx.g1 * fz.q1p;
    let n2 = -c.xi * fz.e1 + 0.5 * c.theta * c.theta * (1.0 / fz.y1 - fz.curv);
    n1 * nu1 + n2 * nu2
}

/// Boundary flux kernel `I`: multiplies `d phi/dx` along the boundary.
#[inline]
pub fn kernel_i(c: &OpScalars, fx: &XFactors, fz: &ZFactors, nu1: f64, nu2: f64) -> f64 {
    -0.5 * fz.y * fx.g1 * fx.g1 * nu1 - c.rho * c.theta * fx.g1 * fz.q1 * nu2
}

/// Boundary flux kernel `Theta`: multiplies `d phi/dz` along the boundary.
#[inline]
pub fn kernel_theta(c: &OpScalars, fz: &ZFactors, nu2: f64) -> f64 {
    -0.5 * c.theta * c.theta * fz.y / (fz.y1 * fz.y1) * nu2
}

/// Full per-point coefficient bundle; used by consistency tests that apply
/// the operator in its pre-divergence form.
#[derive(Debug, Clone, Copy)]
pub struct OperatorCoefficients {
    /// Symmetric diffusion tensor `E = 1/2 [[y s^2, rho theta s y], [.., theta^2 y]]`.
    pub diffusion: [[f64; 2]; 2],
    /// Diagonal split `E1` of the diffusion tensor.
    pub diffusion_diag: [f64; 2],
    /// Off-diagonal split `E2 = (rho theta / 2) (s, y)`.
    pub diffusion_off: [f64; 2],
    /// Convection vector `F` (with the operator's sign convention).
    pub convection: [f64; 2],
    /// Inverse map Jacobians `P = (1/s', 1/y')`.
    pub jacobian: [f64; 2],
    pub m: f64,
}

/// Coefficients evaluated at a transformed point `(x, z)`.
pub fn coefficients_at(
    c: &OpScalars,
    s_map: &SinhMap,
    y_map: &SinhMap,
    x: f64,
    z: f64,
) -> OperatorCoefficients {
    let fx = XFactors::at(s_map, x);
    let fz = ZFactors::at(y_map, c.eta, z);
    let (s, y) = (fx.s, fz.y);
    let half_cross = 0.5 * c.rho * c.theta * s * y;
    OperatorCoefficients {
        diffusion: [[0.5 * y * s * s, half_cross], [half_cross, 0.5 * c.theta * c.theta * y]],
        diffusion_diag: [0.5 * y * s * s, 0.5 * c.theta * c.theta * y],
        diffusion_off: [0.5 * c.rho * c.theta * s, 0.5 * c.rho * c.theta * y],
        convection: [
            -(c.drift * s - y * s - 0.5 * c.rho * c.theta * s),
            -(c.xi * (c.eta - y) - 0.5 * c.theta * c.theta - 0.5 * c.rho * c.theta * y),
        ],
        jacobian: [1.0 / fx.s1, 1.0 / fz.y1],
        m: kernel_m(c, &fx, &fz),
    }
}

/// Steady operator applied to a smooth field with known derivatives, in its
/// pre-divergence form
/// `(F*P).grad(u) - P.div((E*P)^T grad u) + (r + lambda) u`.
///
/// This is the independent route the manufactured-solution tests integrate
/// over each sub-domain and compare against the assembled rows.
#[allow(clippy::too_many_arguments)]
pub fn steady_operator_on_field(
    c: &OpScalars,
    s_map: &SinhMap,
    y_map: &SinhMap,
    x: f64,
    z: f64,
    u: f64,
    ux: f64,
    uz: f64,
    uxx: f64,
    uzz: f64,
    uxz: f64,
) -> f64 {
    let fx = XFactors::at(s_map, x);
    let fz = ZFactors::at(y_map, c.eta, z);
    let (s, y) = (fx.s, fz.y);
    let conv1 = -(c.drift * s - y * s - 0.5 * c.rho * c.theta * s) / fx.s1;
    let conv2 = -(c.xi * (c.eta - y) - 0.5 * c.theta * c.theta - 0.5 * c.rho * c.theta * y) / fz.y1;
    // First-order part of the transformed diffusion operator.
    let c1 = y * fx.g1 - 0.5 * y * fx.curv + 0.5 * c.rho * c.theta * fx.g1;
    let c2 = 0.5 * c.theta * c.theta * fz.q1p / fz.y1 + 0.5 * c.rho * c.theta * fz.q1;
    // Second-order diagonal and cross parts.
    let d1 = 0.5 * y * fx.g1 * fx.g1;
    let d2 = 0.5 * c.theta * c.theta * fz.y / (fz.y1 * fz.y1);
    let cross = c.rho * c.theta * fx.g1 * fz.q1;
    let diffusion = c1 * ux + c2 * uz + d1 * uxx + d2 * uzz + cross * uxz;
    conv1 * ux + conv2 * uz - diffusion + c.reaction() * u
}
