//! Sinh coordinate stretching between the physical price/variance rectangle
//! `[0, s_max] x [0, y_max]` and the unit square, plus the uniform tensor
//! node grid living in the transformed plane.
//!
//! The map concentrates nodes near the strike in the price direction and
//! near `y0` in the variance direction; its derivatives are analytic closed
//! forms because they feed second-order operator coefficients.

use crate::error::{PricerError, Result};

/// One-dimensional sinh stretch `u in [0,1] <-> v in [0, cap]`, concentrated
/// around `center`:
///
/// `v(u) = sinh(u*A - (1-u)*B)/scale + center`,
/// `A = asinh(scale*(cap-center))`, `B = asinh(scale*center)`.
#[derive(Debug, Clone, Copy)]
pub struct SinhMap {
    scale: f64,
    center: f64,
    cap: f64,
    a: f64,
    b: f64,
}

impl SinhMap {
    pub fn new(scale: f64, center: f64, cap: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(PricerError::Parameter(format!(
                "stretch intensity must be > 0, got {scale}"
            )));
        }
        if !(cap > 0.0) || center < 0.0 || center > cap {
            return Err(PricerError::Parameter(format!(
                "stretch center must lie inside (0, cap): center={center}, cap={cap}"
            )));
        }
        let a = (scale * (cap - center)).asinh();
        let b = (scale * center).asinh();
        Ok(SinhMap { scale, center, cap, a, b })
    }

    #[inline]
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Transformed coordinate of a physical value.
    #[inline]
    pub fn forward(&self, v: f64) -> f64 {
        ((self.scale * (v - self.center)).asinh() + self.b) / (self.a + self.b)
    }

    /// Physical value of a transformed coordinate.
    #[inline]
    pub fn inverse(&self, u: f64) -> f64 {
        (u * self.a - (1.0 - u) * self.b).sinh() / self.scale + self.center
    }

    /// First derivative `dv/du`.
    #[inline]
    pub fn d1(&self, u: f64) -> f64 {
        let c = self.a + self.b;
        c * (u * self.a - (1.0 - u) * self.b).cosh() / self.scale
    }

    /// Second derivative `d2v/du2`.
    #[inline]
    pub fn d2(&self, u: f64) -> f64 {
        let c = self.a + self.b;
        c * c * (u * self.a - (1.0 - u) * self.b).sinh() / self.scale
    }

    /// Third derivative `d3v/du3`.
    #[inline]
    pub fn d3(&self, u: f64) -> f64 {
        let c = self.a + self.b;
        c * c * c * (u * self.a - (1.0 - u) * self.b).cosh() / self.scale
    }
}

/// Stretch configuration for both directions.
#[derive(Debug, Clone, Copy)]
pub struct StretchParams {
    /// Stretch intensity near the strike.
    pub xi_s: f64,
    /// Stretch intensity near `y0`.
    pub xi_y: f64,
    /// Asset-price cap `s_max`.
    pub s_max: f64,
    /// Variance cap `y_max`.
    pub y_max: f64,
    /// Strike, the price-direction concentration point.
    pub strike: f64,
    /// Variance-direction concentration point.
    pub y0: f64,
}

impl StretchParams {
    /// Paper defaults: `s_max = 4K`, `y_max = 1`, `xi_s = 1`, `xi_y = 10`.
    pub fn defaults(strike: f64, y0: f64) -> Self {
        StretchParams { xi_s: 1.0, xi_y: 10.0, s_max: 4.0 * strike, y_max: 1.0, strike, y0 }
    }

    pub fn price_map(&self) -> Result<SinhMap> {
        if !(self.strike > 0.0 && self.strike < self.s_max) {
            return Err(PricerError::Parameter(format!(
                "need 0 < strike < s_max, got strike={}, s_max={}",
                self.strike, self.s_max
            )));
        }
        SinhMap::new(self.xi_s, self.strike, self.s_max)
    }

    pub fn variance_map(&self) -> Result<SinhMap> {
        SinhMap::new(self.xi_y, self.y0, self.y_max)
    }
}

/// Maps a physical point `(s, y)` into the unit square, checking the domain.
pub fn forward_map(s: f64, y: f64, p: &StretchParams) -> Result<(f64, f64)> {
    if !(0.0..=p.s_max).contains(&s) {
        return Err(PricerError::Domain(format!("price {s} outside [0, {}]", p.s_max)));
    }
    if !(0.0..=p.y_max).contains(&y) {
        return Err(PricerError::Domain(format!("variance {y} outside [0, {}]", p.y_max)));
    }
    Ok((p.price_map()?.forward(s), p.variance_map()?.forward(y)))
}

/// Maps a transformed point `(x, z)` back to physical coordinates.
pub fn inverse_map(x: f64, z: f64, p: &StretchParams) -> Result<(f64, f64)> {
    Ok((p.price_map()?.inverse(x), p.variance_map()?.inverse(z)))
}

/// Uniform tensor grid in the transformed plane with cached physical
/// coordinates and map derivatives at the nodes.
#[derive(Debug, Clone)]
pub struct NodeGrid {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub stretch: StretchParams,
    s_map: SinhMap,
    y_map: SinhMap,
    /// `s(x_i)`, `s'(x_i)`, `s''(x_i)` for `i = 0..=nx`.
    pub s: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    /// `y(z_j)`, `y'(z_j)`, `y''(z_j)` for `j = 0..=nz`.
    pub y: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

impl NodeGrid {
    pub fn build(nx: usize, nz: usize, stretch: StretchParams) -> Result<Self> {
        if nx < 2 || nz < 1 {
            return Err(PricerError::Parameter(format!(
                "grid needs nx >= 2 and nz >= 1, got ({nx}, {nz})"
            )));
        }
        let s_map = stretch.price_map()?;
        let y_map = stretch.variance_map()?;
        let dx = 1.0 / nx as f64;
        let dz = 1.0 / nz as f64;
        let xs: Vec<f64> = (0..=nx).map(|i| i as f64 * dx).collect();
        let zs: Vec<f64> = (0..=nz).map(|j| j as f64 * dz).collect();
        Ok(NodeGrid {
            nx,
            nz,
            dx,
            dz,
            stretch,
            s_map,
            y_map,
            s: xs.iter().map(|&x| s_map.inverse(x)).collect(),
            s1: xs.iter().map(|&x| s_map.d1(x)).collect(),
            s2: xs.iter().map(|&x| s_map.d2(x)).collect(),
            y: zs.iter().map(|&z| y_map.inverse(z)).collect(),
            y1: zs.iter().map(|&z| y_map.d1(z)).collect(),
            y2: zs.iter().map(|&z| y_map.d2(z)).collect(),
        })
    }

    /// Spacing unit `h = max(dx, dz)` used to size support and sub-domains.
    #[inline]
    pub fn h(&self) -> f64 {
        self.dx.max(self.dz)
    }

    /// Total node count `(nx+1)(nz+1)`.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.nz + 1)
    }

    /// Lexicographic node index with the variance direction innermost.
    #[inline]
    pub fn node_index(&self, ix: usize, iz: usize) -> usize {
        ix * (self.nz + 1) + iz
    }

    #[inline]
    pub fn node_xz(&self, ix: usize, iz: usize) -> (f64, f64) {
        (ix as f64 * self.dx, iz as f64 * self.dz)
    }

    #[inline]
    pub fn s_map(&self) -> &SinhMap {
        &self.s_map
    }

    #[inline]
    pub fn y_map(&self) -> &SinhMap {
        &self.y_map
    }

    /// Analytic map derivatives at the nodes; the grid caches them because
    /// finite differences would pollute the second-order operator
    /// coefficients.
    pub fn jacobians(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.s1, &self.s2, &self.y1, &self.y2)
    }
}
