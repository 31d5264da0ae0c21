//! Wendland compactly supported kernels and the local radial point
//! interpolation (RPIM) shape functions with monomial augmentation.
//!
//! For an evaluation point `x`, the `n` grid nodes inside the support radius
//! define a local interpolation system
//!
//! ```text
//!   G [a; b] = [u; 0],   G = | R  P |
//!                            | P' 0 |
//! ```
//!
//! where `R` holds kernel values between support nodes and `P` the monomials
//! `{1, x, z, xz}` (m = 4). Shape functions are recovered as
//! `phi(x) = [R(x); P(x)]' G^{-1}` restricted to the first `n` entries, and
//! derivatives follow by differentiating `R(x)` and `P(x)` only, since `G`
//! depends on the node set alone. Local systems are cached per relative
//! support pattern, which also keeps evaluation bit-deterministic.

use std::collections::HashMap;

use crate::error::{PricerError, Result};
use crate::transform::NodeGrid;

/// Number of augmentation monomials: `{1, x, z, xz}`.
pub const N_MONOMIALS: usize = 4;

/// Condition-number proxy above which a local system is rebuilt with an
/// enlarged support before giving up.
const CONDITION_LIMIT: f64 = 1e12;

/// Enlargement factor for the one-shot retry.
const RETRY_FACTOR: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Smoothness {
    C2,
    C4,
    C6,
}

impl Smoothness {
    pub fn label(&self) -> &'static str {
        match self {
            Smoothness::C2 => "c2",
            Smoothness::C4 => "c4",
            Smoothness::C6 => "c6",
        }
    }
}

/// A Wendland kernel with its support radius.
#[derive(Debug, Clone, Copy)]
pub struct WendlandKernel {
    pub smoothness: Smoothness,
    pub support_radius: f64,
}

impl WendlandKernel {
    pub fn new(smoothness: Smoothness, support_radius: f64) -> Self {
        WendlandKernel { smoothness, support_radius }
    }

    /// Kernel value and first/second derivatives in the normalized variable
    /// `r = distance / support_radius`. Identically zero for `r >= 1`.
    #[inline]
    pub fn eval_normalized(&self, r: f64) -> (f64, f64, f64) {
        if r >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let u = 1.0 - r;
        match self.smoothness {
            Smoothness::C2 => {
                let u2 = u * u;
                let u3 = u2 * u;
                (u3 * u * (1.0 + 4.0 * r), -20.0 * r * u3, -20.0 * u2 * (1.0 - 4.0 * r))
            }
            Smoothness::C4 => {
                let u2 = u * u;
                let u4 = u2 * u2;
                let u5 = u4 * u;
                (
                    u5 * u * (3.0 + r * (18.0 + 35.0 * r)),
                    -56.0 * r * (1.0 + 5.0 * r) * u5,
                    -56.0 * u4 * (1.0 + r * (4.0 - 35.0 * r)),
                )
            }
            Smoothness::C6 => {
                let u2 = u * u;
                let u3 = u2 * u;
                let u6 = u3 * u3;
                let u7 = u6 * u;
                (
                    u6 * u2 * (1.0 + r * (8.0 + r * (25.0 + 32.0 * r))),
                    -22.0 * r * (1.0 + r * (7.0 + 16.0 * r)) * u7,
                    -22.0 * u6 * (1.0 + r * (6.0 - r * (15.0 + 160.0 * r))),
                )
            }
        }
    }

    /// `phi'(r)/r`, finite at the origin; needed for 2-D partials.
    #[inline]
    fn slope_over_r(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - r;
        match self.smoothness {
            Smoothness::C2 => -20.0 * u * u * u,
            Smoothness::C4 => {
                let u2 = u * u;
                -56.0 * (1.0 + 5.0 * r) * u2 * u2 * u
            }
            Smoothness::C6 => {
                let u2 = u * u;
                let u3 = u2 * u;
                -22.0 * (1.0 + r * (7.0 + 16.0 * r)) * u3 * u3 * u
            }
        }
    }

    /// Derivative of [`Self::slope_over_r`].
    #[inline]
    fn slope_over_r_prime(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - r;
        match self.smoothness {
            Smoothness::C2 => 60.0 * u * u,
            Smoothness::C4 => {
                let u2 = u * u;
                1680.0 * r * u2 * u2
            }
            Smoothness::C6 => {
                let u2 = u * u;
                528.0 * r * (1.0 + 6.0 * r) * u2 * u2 * u2
            }
        }
    }
}

/// Kernel value plus radial derivatives at a physical `distance`, in
/// physical units.
pub fn kernel_eval(kernel: &WendlandKernel, distance: f64) -> (f64, f64, f64) {
    debug_assert!(distance >= 0.0);
    let rw = kernel.support_radius;
    let (w, dw, ddw) = kernel.eval_normalized(distance / rw);
    (w, dw / rw, ddw / (rw * rw))
}

/// Shape-function values and derivatives at one evaluation point, indexed by
/// the support node columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalShape {
    /// Global node indices of the support set.
    pub cols: Vec<u32>,
    pub phi: Vec<f64>,
    pub dx: Vec<f64>,
    pub dz: Vec<f64>,
    pub dxx: Vec<f64>,
    pub dzz: Vec<f64>,
    pub dxz: Vec<f64>,
}

/// One factorized local moment matrix, shared by every evaluation point with
/// the same relative support pattern.
struct CachedFactor {
    lu: SmallLu,
    /// Grid offsets of the support nodes relative to the anchor node.
    offsets: Vec<(i32, i32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PatternKey {
    offsets_hash: u64,
    n: u32,
    enlarged: bool,
}

/// Builds shape functions on demand, caching local factorizations per
/// support pattern.
pub struct ShapeEvaluator<'g> {
    grid: &'g NodeGrid,
    kernel: WendlandKernel,
    /// Per-direction support radii; the kernel argument is the scaled
    /// distance `sqrt((dx/rx)^2 + (dz/rz)^2)`, so supports are circles in
    /// cell units and ellipses in the transformed plane.
    radii: (f64, f64),
    /// Optional restriction of the usable centers (spec: `centers` subset).
    mask: Option<Vec<bool>>,
    cache: HashMap<PatternKey, Vec<(Vec<(i32, i32)>, SmallLu)>>,
    /// Number of evaluation points that needed the enlarged-support retry.
    pub retries: usize,
}

impl<'g> ShapeEvaluator<'g> {
    pub fn new(grid: &'g NodeGrid, kernel: WendlandKernel) -> Self {
        let r = kernel.support_radius;
        Self::with_radii(grid, kernel.smoothness, (r, r))
    }

    /// Builds an evaluator with distinct support radii per direction.
    pub fn with_radii(grid: &'g NodeGrid, smoothness: Smoothness, radii: (f64, f64)) -> Self {
        ShapeEvaluator {
            grid,
            kernel: WendlandKernel::new(smoothness, radii.0.max(radii.1)),
            radii,
            mask: None,
            cache: HashMap::new(),
            retries: 0,
        }
    }

    /// Base support radius of fresh evaluations (before any retry).
    pub fn kernel_radius(&self) -> f64 {
        self.kernel.support_radius
    }

    /// Restricts the support search to the given node indices.
    pub fn with_centers(mut self, centers: &[usize]) -> Self {
        let mut mask = vec![false; self.grid.n_nodes()];
        for &c in centers {
            mask[c] = true;
        }
        self.mask = Some(mask);
        self
    }

    /// Support node indices within the scaled unit distance of `(px, pz)`,
    /// in index order.
    fn support(&self, px: f64, pz: f64, rx: f64, rz: f64) -> Vec<(usize, usize)> {
        let g = self.grid;
        let r2 = 1.0 - 1e-12;
        let ix_lo = (((px - rx) / g.dx).ceil().max(0.0)) as usize;
        let ix_hi = (((px + rx) / g.dx).floor().min(g.nx as f64)) as usize;
        let iz_lo = (((pz - rz) / g.dz).ceil().max(0.0)) as usize;
        let iz_hi = (((pz + rz) / g.dz).floor().min(g.nz as f64)) as usize;
        let mut out = Vec::with_capacity(24);
        for ix in ix_lo..=ix_hi {
            let u = (ix as f64 * g.dx - px) / rx;
            for iz in iz_lo..=iz_hi {
                let v = (iz as f64 * g.dz - pz) / rz;
                if u * u + v * v < r2 {
                    if let Some(mask) = &self.mask {
                        if !mask[g.node_index(ix, iz)] {
                            continue;
                        }
                    }
                    out.push((ix, iz));
                }
            }
        }
        out
    }

    /// Shape functions and first/second derivatives at `(px, pz)`.
    pub fn eval(&mut self, px: f64, pz: f64) -> Result<LocalShape> {
        match self.try_eval(px, pz, false) {
            Ok(shape) => Ok(shape),
            Err(PricerError::ShapeFunction { .. }) => {
                // One-shot retry with an enlarged support: flat local
                // configurations near corners can degenerate.
                self.retries += 1;
                self.try_eval(px, pz, true)
            }
            Err(e) => Err(e),
        }
    }

    fn try_eval(&mut self, px: f64, pz: f64, enlarged: bool) -> Result<LocalShape> {
        let scale = if enlarged { RETRY_FACTOR } else { 1.0 };
        let (rx, rz) = (self.radii.0 * scale, self.radii.1 * scale);
        let kernel = WendlandKernel::new(self.kernel.smoothness, 1.0);
        let support = self.support(px, pz, rx, rz);
        let n = support.len();
        // n = m is admissible (pure monomial interpolation, e.g. at domain
        // corners); fewer nodes cannot determine the local system.
        if n < N_MONOMIALS {
            return Err(PricerError::ShapeFunction {
                x: px,
                z: pz,
                reason: format!(
                    "only {n} support nodes inside radii ({rx:.3e}, {rz:.3e}); need at least \
                     {N_MONOMIALS} (try a larger support radius)"
                ),
            });
        }
        let anchor = support[0];
        let offsets: Vec<(i32, i32)> = support
            .iter()
            .map(|&(ix, iz)| (ix as i32 - anchor.0 as i32, iz as i32 - anchor.1 as i32))
            .collect();

        let g = self.grid;
        let lu = self
            .factor_for(&offsets, &kernel, (rx, rz), enlarged)
            .map_err(|reason| PricerError::ShapeFunction { x: px, z: pz, reason })?;

        // Build the right-hand sides in anchor-local coordinates scaled by
        // the per-direction radii, matching the cached moment matrix.
        let (ax, az) = (anchor.0 as f64 * g.dx, anchor.1 as f64 * g.dz);
        let dim = n + N_MONOMIALS;
        let ex = (px - ax) / rx;
        let ez = (pz - az) / rz;
        let mut b = vec![0.0; dim * 6];
        let (bv, rest) = b.split_at_mut(dim);
        let (bx, rest) = rest.split_at_mut(dim);
        let (bz, rest) = rest.split_at_mut(dim);
        let (bxx, rest) = rest.split_at_mut(dim);
        let (bzz, bxz) = rest.split_at_mut(dim);
        for (p, &(ix, iz)) in support.iter().enumerate() {
            // Scaled offsets: u = dx/rx, v = dz/rz, r = |(u, v)|.
            let u = (px - ix as f64 * g.dx) / rx;
            let v = (pz - iz as f64 * g.dz) / rz;
            let r = (u * u + v * v).sqrt();
            let (val, _, _) = kernel.eval_normalized(r);
            bv[p] = val;
            if r < 1e-14 {
                let psi0 = kernel.slope_over_r(0.0);
                bx[p] = 0.0;
                bz[p] = 0.0;
                bxx[p] = psi0 / (rx * rx);
                bzz[p] = psi0 / (rz * rz);
                bxz[p] = 0.0;
            } else {
                let psi = kernel.slope_over_r(r);
                let dpsi = kernel.slope_over_r_prime(r);
                bx[p] = psi * u / rx;
                bz[p] = psi * v / rz;
                bxx[p] = psi / (rx * rx) + dpsi * u * u / (r * rx * rx);
                bzz[p] = psi / (rz * rz) + dpsi * v * v / (r * rz * rz);
                bxz[p] = dpsi * u * v / (r * rx * rz);
            }
        }
        // Monomials {1, X, Z, XZ} in the scaled local frame.
        bv[n] = 1.0;
        bv[n + 1] = ex;
        bv[n + 2] = ez;
        bv[n + 3] = ex * ez;
        bx[n + 1] = 1.0 / rx;
        bx[n + 3] = ez / rx;
        bz[n + 2] = 1.0 / rz;
        bz[n + 3] = ex / rz;
        bxz[n + 3] = 1.0 / (rx * rz);

        let mut shape = LocalShape {
            cols: support.iter().map(|&(ix, iz)| g.node_index(ix, iz) as u32).collect(),
            ..Default::default()
        };
        let mut scratch = vec![0.0; dim];
        let mut solve_into = |rhs: &mut [f64], out: &mut Vec<f64>| {
            lu.solve(rhs, &mut scratch);
            out.extend_from_slice(&rhs[..n]);
        };
        solve_into(bv, &mut shape.phi);
        solve_into(bx, &mut shape.dx);
        solve_into(bz, &mut shape.dz);
        solve_into(bxx, &mut shape.dxx);
        solve_into(bzz, &mut shape.dzz);
        solve_into(bxz, &mut shape.dxz);
        Ok(shape)
    }

    /// Returns the cached factorization for a support pattern, building it
    /// on first use. The moment matrix is translation invariant on the
    /// uniform grid, so patterns repeat heavily.
    fn factor_for(
        &mut self,
        offsets: &[(i32, i32)],
        kernel: &WendlandKernel,
        radii: (f64, f64),
        enlarged: bool,
    ) -> std::result::Result<&SmallLu, String> {
        let key = PatternKey {
            offsets_hash: hash_offsets(offsets),
            n: offsets.len() as u32,
            enlarged,
        };
        let bucket = self.cache.entry(key).or_default();
        // Hash collisions are disambiguated by the stored offset list.
        let pos = bucket.iter().position(|(o, _)| o == offsets);
        let idx = match pos {
            Some(i) => i,
            None => {
                let lu = build_moment_factor(self.grid, offsets, kernel, radii)?;
                bucket.push((offsets.to_vec(), lu));
                bucket.len() - 1
            }
        };
        Ok(&bucket[idx].1)
    }
}

fn hash_offsets(offsets: &[(i32, i32)]) -> u64 {
    // FNV-1a over the packed offsets; collisions are handled by the caller.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &(a, b) in offsets {
        for v in [a as u64, b as u64] {
            h ^= v;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

fn build_moment_factor(
    grid: &NodeGrid,
    offsets: &[(i32, i32)],
    kernel: &WendlandKernel,
    radii: (f64, f64),
) -> std::result::Result<SmallLu, String> {
    let n = offsets.len();
    let dim = n + N_MONOMIALS;
    let (rx, rz) = radii;
    let mut g = vec![0.0; dim * dim];
    for p in 0..n {
        let (pix, piz) = offsets[p];
        for q in 0..n {
            let u = (offsets[q].0 - pix) as f64 * grid.dx / rx;
            let v = (offsets[q].1 - piz) as f64 * grid.dz / rz;
            let r = (u * u + v * v).sqrt();
            g[p * dim + q] = kernel.eval_normalized(r).0;
        }
        let x = pix as f64 * grid.dx / rx;
        let z = piz as f64 * grid.dz / rz;
        let mono = [1.0, x, z, x * z];
        for (j, &m) in mono.iter().enumerate() {
            g[p * dim + n + j] = m;
            g[(n + j) * dim + p] = m;
        }
    }
    let lu = SmallLu::factor(g, dim)?;
    if lu.condition_estimate() > CONDITION_LIMIT {
        return Err(format!(
            "local moment matrix ill-conditioned (estimate {:.2e} > {:.0e})",
            lu.condition_estimate(),
            CONDITION_LIMIT
        ));
    }
    Ok(lu)
}

/// Dense LU with full pivoting for the tiny local systems.
pub(crate) struct SmallLu {
    a: Vec<f64>,
    n: usize,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    cond: f64,
}

impl SmallLu {
    pub(crate) fn factor(mut a: Vec<f64>, n: usize) -> std::result::Result<Self, String> {
        let mut row_perm: Vec<usize> = (0..n).collect();
        let mut col_perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // Full pivot search in the trailing block.
            let (mut pr, mut pc, mut best) = (k, k, 0.0);
            for i in k..n {
                for j in k..n {
                    let v = a[i * n + j].abs();
                    if v > best {
                        best = v;
                        pr = i;
                        pc = j;
                    }
                }
            }
            if best == 0.0 {
                return Err(format!("singular local system at elimination step {k}"));
            }
            if pr != k {
                for j in 0..n {
                    a.swap(k * n + j, pr * n + j);
                }
                row_perm.swap(k, pr);
            }
            if pc != k {
                for i in 0..n {
                    a.swap(i * n + k, i * n + pc);
                }
                col_perm.swap(k, pc);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / pivot;
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        let mut dmax: f64 = 0.0;
        let mut dmin = f64::INFINITY;
        for k in 0..n {
            let d = a[k * n + k].abs();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        Ok(SmallLu { a, n, row_perm, col_perm, cond: dmax / dmin })
    }

    /// Ratio of extreme U-diagonal magnitudes, a cheap condition proxy.
    pub(crate) fn condition_estimate(&self) -> f64 {
        self.cond
    }

    /// Solves in place: `rhs` is overwritten with the solution.
    pub(crate) fn solve(&self, rhs: &mut [f64], scratch: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            scratch[k] = rhs[self.row_perm[k]];
        }
        for k in 0..n {
            let mut acc = scratch[k];
            for j in 0..k {
                acc -= self.a[k * n + j] * scratch[j];
            }
            scratch[k] = acc;
        }
        for k in (0..n).rev() {
            let mut acc = scratch[k];
            for j in k + 1..n {
                acc -= self.a[k * n + j] * scratch[j];
            }
            scratch[k] = acc / self.a[k * n + k];
        }
        for k in 0..n {
            rhs[self.col_perm[k]] = scratch[k];
        }
    }
}

/// Shape functions and derivatives evaluated at a fixed list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFunctionTable {
    pub n_nodes: usize,
    pub points: Vec<(f64, f64)>,
    pub rows: Vec<LocalShape>,
}

/// Builds the table for `eval_points`; `centers` optionally restricts which
/// grid nodes may serve as interpolation centers.
pub fn build_shape_functions(
    grid: &NodeGrid,
    centers: Option<&[usize]>,
    eval_points: &[(f64, f64)],
    kernel: WendlandKernel,
) -> Result<ShapeFunctionTable> {
    let mut eval = ShapeEvaluator::new(grid, kernel);
    if let Some(c) = centers {
        eval = eval.with_centers(c);
    }
    let rows = eval_points
        .iter()
        .map(|&(x, z)| eval.eval(x, z))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapeFunctionTable { n_nodes: grid.n_nodes(), points: eval_points.to_vec(), rows })
}

impl ShapeFunctionTable {
    /// Interpolates nodal values at every table point.
    pub fn interpolate(&self, nodal_values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(nodal_values)?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.cols.iter().zip(&row.phi).map(|(&c, &p)| p * nodal_values[c as usize]).sum())
            .collect())
    }

    /// Interpolated gradients `(d/dx, d/dz)` at every table point.
    pub fn interpolate_gradient(&self, nodal_values: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.check_len(nodal_values)?;
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut gx = 0.0;
                let mut gz = 0.0;
                for ((&c, &dx), &dz) in row.cols.iter().zip(&row.dx).zip(&row.dz) {
                    let v = nodal_values[c as usize];
                    gx += dx * v;
                    gz += dz * v;
                }
                (gx, gz)
            })
            .collect())
    }

    fn check_len(&self, nodal_values: &[f64]) -> Result<()> {
        if nodal_values.len() != self.n_nodes {
            return Err(PricerError::Usage(format!(
                "nodal vector has length {}, grid has {} nodes",
                nodal_values.len(),
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// Default support radius `l * h` with `l = 1.5`.
pub fn default_support_radius(grid: &NodeGrid, l: f64) -> f64 {
    l * grid.h()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::StretchParams;
    use rand::{Rng, SeedableRng};

    fn grid(nx: usize, nz: usize) -> NodeGrid {
        NodeGrid::build(nx, nz, StretchParams::defaults(10.0, 0.0625)).unwrap()
    }

    fn kernel_for(grid: &NodeGrid, s: Smoothness) -> WendlandKernel {
        WendlandKernel::new(s, default_support_radius(grid, 1.5))
    }

    #[test]
    fn kernel_values_at_origin_and_midpoint() {
        let k = WendlandKernel::new(Smoothness::C2, 1.0);
        assert_eq!(k.eval_normalized(0.0).0, 1.0);
        assert!((k.eval_normalized(0.5).0 - 0.1875).abs() < 1e-15);
        let k4 = WendlandKernel::new(Smoothness::C4, 1.0);
        assert_eq!(k4.eval_normalized(0.0).0, 3.0);
        let k6 = WendlandKernel::new(Smoothness::C6, 1.0);
        assert_eq!(k6.eval_normalized(0.0).0, 1.0);
    }

    #[test]
    fn kernel_compact_support() {
        for s in [Smoothness::C2, Smoothness::C4, Smoothness::C6] {
            let k = WendlandKernel::new(s, 2.0);
            assert_eq!(kernel_eval(&k, 3.0), (0.0, 0.0, 0.0));
            assert_eq!(kernel_eval(&k, 2.0), (0.0, 0.0, 0.0));
            // Continuity approaching the support edge.
            let (v, d1, _) = kernel_eval(&k, 2.0 * (1.0 - 1e-8));
            assert!(v.abs() < 1e-14 && d1.abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_radial_derivatives_match_finite_differences() {
        for s in [Smoothness::C2, Smoothness::C4, Smoothness::C6] {
            let k = WendlandKernel::new(s, 1.0);
            for i in 1..20 {
                let r = i as f64 * 0.047;
                let h = 1e-6;
                let (_, d1, d2) = k.eval_normalized(r);
                let fd1 = (k.eval_normalized(r + h).0 - k.eval_normalized(r - h).0) / (2.0 * h);
                let fd2 = (k.eval_normalized(r + h).1 - k.eval_normalized(r - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-7, "{s:?} d1 at {r}");
                assert!((d2 - fd2).abs() < 1e-6, "{s:?} d2 at {r}");
                // slope_over_r consistency.
                assert!((k.slope_over_r(r) * r - d1).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn kronecker_property_at_nodes() {
        let g = grid(16, 8);
        let kernel = kernel_for(&g, Smoothness::C6);
        let mut eval = ShapeEvaluator::new(&g, kernel);
        for &(ix, iz) in &[(0usize, 0usize), (5, 3), (16, 8), (8, 0), (1, 7)] {
            let (x, z) = g.node_xz(ix, iz);
            let shape = eval.eval(x, z).unwrap();
            let target = g.node_index(ix, iz) as u32;
            for (&c, &p) in shape.cols.iter().zip(&shape.phi) {
                let expect = if c == target { 1.0 } else { 0.0 };
                assert!((p - expect).abs() < 1e-10, "phi[{c}] = {p} at node {target}");
            }
        }
    }

    #[test]
    fn partition_of_unity_and_linear_reproduction() {
        let g = grid(16, 8);
        for s in [Smoothness::C2, Smoothness::C4, Smoothness::C6] {
            let mut eval = ShapeEvaluator::new(&g, kernel_for(&g, s));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            for _ in 0..100 {
                let x: f64 = rng.random();
                let z: f64 = rng.random();
                let shape = eval.eval(x, z).unwrap();
                let ones: f64 = shape.phi.iter().sum();
                assert!((ones - 1.0).abs() < 1e-10, "{s:?}: sum phi = {ones}");
                let dsum: f64 = shape.dx.iter().sum();
                assert!(dsum.abs() < 1e-8, "{s:?}: sum dphi/dx = {dsum}");

                // u = 2x - 3z + 0.5 reproduced exactly with gradient (2, -3).
                let mut val = 0.0;
                let mut gx = 0.0;
                let mut gz = 0.0;
                for (k, &c) in shape.cols.iter().enumerate() {
                    let ix = c as usize / (g.nz + 1);
                    let iz = c as usize % (g.nz + 1);
                    let (nx, nz) = g.node_xz(ix, iz);
                    let u = 2.0 * nx - 3.0 * nz + 0.5;
                    val += shape.phi[k] * u;
                    gx += shape.dx[k] * u;
                    gz += shape.dz[k] * u;
                }
                let exact = 2.0 * x - 3.0 * z + 0.5;
                assert!((val - exact).abs() < 1e-9);
                assert!((gx - 2.0).abs() < 1e-8);
                assert!((gz + 3.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bilinear_term_reproduced_by_augmentation() {
        // The monomial basis includes xz, so u = xz is reproduced with exact
        // first and second derivatives.
        let g = grid(16, 8);
        let mut eval = ShapeEvaluator::new(&g, kernel_for(&g, Smoothness::C4));
        let shape = eval.eval(0.37, 0.61).unwrap();
        let mut val = 0.0;
        let mut dxz = 0.0;
        for (k, &c) in shape.cols.iter().enumerate() {
            let ix = c as usize / (g.nz + 1);
            let iz = c as usize % (g.nz + 1);
            let (nx, nz) = g.node_xz(ix, iz);
            val += shape.phi[k] * nx * nz;
            dxz += shape.dxz[k] * nx * nz;
        }
        assert!((val - 0.37 * 0.61).abs() < 1e-9);
        assert!((dxz - 1.0).abs() < 1e-7);
    }

    #[test]
    fn derivatives_match_finite_differences_of_interpolant() {
        let g = grid(16, 8);
        let mut eval = ShapeEvaluator::new(&g, kernel_for(&g, Smoothness::C6));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // Smooth random field: a low-order trig mix with random coefficients.
        let coef: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let smooth = |x: f64, z: f64| {
            coef[0]
                + coef[1] * (2.0 * x).sin()
                + coef[2] * (3.0 * z).cos()
                + coef[3] * x * z
                + coef[4] * (x + 2.0 * z).sin()
                + coef[5] * (2.5 * x).cos()
        };
        let nodal: Vec<f64> = (0..g.n_nodes())
            .map(|k| {
                let (x, z) = g.node_xz(k / (g.nz + 1), k % (g.nz + 1));
                smooth(x, z)
            })
            .collect();
        let interp = |e: &mut ShapeEvaluator, x: f64, z: f64| -> f64 {
            let s = e.eval(x, z).unwrap();
            s.cols.iter().zip(&s.phi).map(|(&c, &p)| p * nodal[c as usize]).sum()
        };
        // Generic points: stencils must not straddle a support-switch locus,
        // where the interpolant is only piecewise smooth.
        let h = 1e-6;
        for &(x, z) in &[(0.31371, 0.42923), (0.52117, 0.18309), (0.80923, 0.77441)] {
            let s = eval.eval(x, z).unwrap();
            let dx: f64 = s.cols.iter().zip(&s.dx).map(|(&c, &d)| d * nodal[c as usize]).sum();
            let fd = (interp(&mut eval, x + h, z) - interp(&mut eval, x - h, z)) / (2.0 * h);
            assert!((dx - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{dx} vs {fd}");
            let dz: f64 = s.cols.iter().zip(&s.dz).map(|(&c, &d)| d * nodal[c as usize]).sum();
            let fdz = (interp(&mut eval, x, z + h) - interp(&mut eval, x, z - h)) / (2.0 * h);
            assert!((dz - fdz).abs() <= 1e-5 * fdz.abs().max(1.0));
        }
    }

    #[test]
    fn interpolation_table_round_trip() {
        let g = grid(16, 8);
        let pts = vec![(0.1, 0.2), (0.5, 0.5), (0.9, 0.03)];
        let table =
            build_shape_functions(&g, None, &pts, kernel_for(&g, Smoothness::C4)).unwrap();
        let zeros = vec![0.0; g.n_nodes()];
        assert!(table.interpolate(&zeros).unwrap().iter().all(|&v| v == 0.0));
        assert!(table.interpolate(&zeros[1..]).is_err());

        // Payoff nodal data evaluated at a node reproduces the payoff.
        let payoff: Vec<f64> = (0..g.n_nodes())
            .map(|k| {
                let ix = k / (g.nz + 1);
                (g.s[ix] - 10.0).max(0.0)
            })
            .collect();
        let node_pt = vec![g.node_xz(12, 5)];
        let t2 = build_shape_functions(&g, None, &node_pt, kernel_for(&g, Smoothness::C4)).unwrap();
        let v = t2.interpolate(&payoff).unwrap()[0];
        assert!((v - (g.s[12] - 10.0).max(0.0)).abs() < 1e-10);
    }

    #[test]
    fn interpolation_error_drops_with_refinement() {
        // Smooth field on two grids: halving h with r_w = 1.5 h should cut
        // the interpolation error by at least ~4 (observed order >= 2).
        let field = |x: f64, z: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * z).cos();
        let mut errs = Vec::new();
        for (nx, nz) in [(16, 8), (32, 16)] {
            let g = grid(nx, nz);
            let nodal: Vec<f64> = (0..g.n_nodes())
                .map(|k| {
                    let ix = k / (g.nz + 1);
                    let iz = k % (g.nz + 1);
                    let (x, z) = g.node_xz(ix, iz);
                    field(x, z)
                })
                .collect();
            let pts: Vec<(f64, f64)> = (0..30)
                .map(|k| (0.05 + 0.9 * (k as f64) / 29.0, 0.07 + 0.86 * ((k * 7 % 30) as f64) / 29.0))
                .collect();
            let table =
                build_shape_functions(&g, None, &pts, kernel_for(&g, Smoothness::C6)).unwrap();
            let vals = table.interpolate(&nodal).unwrap();
            let err = pts
                .iter()
                .zip(&vals)
                .map(|(&(x, z), &v)| (v - field(x, z)).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 2.0, "observed order {order}, errors {errs:?}");
    }

    #[test]
    fn tables_are_bit_deterministic() {
        let g = grid(16, 8);
        let pts: Vec<(f64, f64)> =
            (0..40).map(|k| (0.025 * k as f64, (0.017 * k as f64) % 1.0)).collect();
        let a = build_shape_functions(&g, None, &pts, kernel_for(&g, Smoothness::C6)).unwrap();
        let b = build_shape_functions(&g, None, &pts, kernel_for(&g, Smoothness::C6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparse_centers_trigger_coverage_error() {
        let g = grid(16, 8);
        // Keep only one corner node: interior points cannot be covered.
        let centers = vec![g.node_index(0, 0)];
        let err = build_shape_functions(
            &g,
            Some(&centers),
            &[(0.5, 0.5)],
            kernel_for(&g, Smoothness::C2),
        )
        .unwrap_err();
        match err {
            PricerError::ShapeFunction { reason, .. } => {
                assert!(reason.contains("support nodes"), "{reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
