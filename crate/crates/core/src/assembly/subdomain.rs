//! Local sub-domains with their interior and boundary quadrature rules.
//!
//! Every non-Dirichlet node gets a rectangle of half-widths
//! `c * dx` by `c * dz` (a square in cell units), clipped to the unit
//! square. Rectangles keep the boundary flux sampling inside the first
//! cell ring in each direction, which is what makes the marching operator
//! contractive on the strongly anisotropic grids this scheme uses; on the
//! clipped edges the natural weak terms are kept. Interior integrals use a
//! tensor Gauss-Legendre rule (two 4-point panels per direction), boundary
//! integrals the matching rule per side.

use crate::error::{PricerError, Result};
use crate::quad::{GL4_NODES, GL4_WEIGHTS};
use crate::transform::NodeGrid;

/// Gauss panels per direction; each panel carries four points.
const PANELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorPoint {
    pub x: f64,
    pub z: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub x: f64,
    pub z: f64,
    pub w: f64,
    /// Outward unit normal of the clipped sub-domain.
    pub nu: (f64, f64),
}

/// One node's integration domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDomain {
    /// Global node index of the center.
    pub node: usize,
    pub center: (f64, f64),
    /// Half-widths of the unclipped rectangle.
    pub half_widths: (f64, f64),
    /// True when any domain edge cuts the rectangle.
    pub clipped: bool,
    /// Clipped bounds `(x_lo, x_hi, z_lo, z_hi)`.
    pub bounds: (f64, f64, f64, f64),
    pub interior: Vec<InteriorPoint>,
    pub boundary: Vec<BoundaryPoint>,
}

/// Composite two-panel Gauss rule on `[a, b]`.
fn panels_on(a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    out.clear();
    let h = (b - a) / PANELS as f64;
    for p in 0..PANELS {
        let lo = a + p as f64 * h;
        let half = 0.5 * h;
        let mid = lo + half;
        for (gn, gw) in GL4_NODES.iter().zip(GL4_WEIGHTS.iter()) {
            out.push((mid + half * gn, half * gw));
        }
    }
}

/// Builds one sub-domain for the node at `(ix, iz)` with half-width
/// multiplier `c` (`half_widths = (c dx, c dz)`).
pub fn build_subdomain(grid: &NodeGrid, ix: usize, iz: usize, c: f64) -> SubDomain {
    let (cx, cz) = grid.node_xz(ix, iz);
    let (ax, bz) = (c * grid.dx, c * grid.dz);
    // The Dirichlet price lines carry no sub-domains, so the first and last
    // interior columns stretch to the boundary to keep the union covering
    // the whole domain.
    let x_lo = if cx - ax < grid.dx { 0.0 } else { cx - ax };
    let x_hi = if cx + ax > 1.0 - grid.dx { 1.0 } else { cx + ax };
    let z_lo = (cz - bz).max(0.0);
    let z_hi = (cz + bz).min(1.0);
    let clipped = x_lo > cx - ax || x_hi < cx + ax || z_lo > cz - bz || z_hi < cz + bz;

    let mut xr = Vec::with_capacity(4 * PANELS);
    let mut zr = Vec::with_capacity(4 * PANELS);
    panels_on(x_lo, x_hi, &mut xr);
    panels_on(z_lo, z_hi, &mut zr);

    let mut sd = SubDomain {
        node: grid.node_index(ix, iz),
        center: (cx, cz),
        half_widths: (ax, bz),
        clipped,
        bounds: (x_lo, x_hi, z_lo, z_hi),
        interior: Vec::with_capacity(xr.len() * zr.len()),
        boundary: Vec::with_capacity(4 * xr.len()),
    };
    for &(x, wx) in &xr {
        for &(z, wz) in &zr {
            sd.interior.push(InteriorPoint { x, z, w: wx * wz });
        }
    }
    // Four sides with outward normals.
    for &(z, w) in &zr {
        sd.boundary.push(BoundaryPoint { x: x_lo, z, w, nu: (-1.0, 0.0) });
        sd.boundary.push(BoundaryPoint { x: x_hi, z, w, nu: (1.0, 0.0) });
    }
    for &(x, w) in &xr {
        sd.boundary.push(BoundaryPoint { x, z: z_lo, w, nu: (0.0, -1.0) });
        sd.boundary.push(BoundaryPoint { x, z: z_hi, w, nu: (0.0, 1.0) });
    }
    sd
}

/// Builds one sub-domain per non-Dirichlet node (all `ix` in `1..nx`).
pub fn make_subdomains(grid: &NodeGrid, c: f64) -> Result<Vec<SubDomain>> {
    if !(c > 0.5) {
        return Err(PricerError::Coverage(format!(
            "sub-domain half-width multiplier {c} must exceed 1/2 so neighbors overlap"
        )));
    }
    let mut out = Vec::with_capacity((grid.nx - 1) * (grid.nz + 1));
    for ix in 1..grid.nx {
        for iz in 0..=grid.nz {
            out.push(build_subdomain(grid, ix, iz, c));
        }
    }
    Ok(out)
}
