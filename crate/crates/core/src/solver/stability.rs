//! Spectral-radius stability diagnostic.
//!
//! The marching operator is `u^{k} = F^{-1} G u^{k+1}` with
//! `F = S + E/dt` and `G = E/dt + L`. The scheme is stable when
//! `rho(F^{-1} G) <= 1`; the companion quantity `rho(E^{-1} S) -
//! rho(E^{-1} L)` is reported alongside. Dominant moduli come from a
//! quadratic power iteration (a two-term Krylov fit), which converges for
//! complex-conjugate dominant pairs as well.

use crate::assembly::BandedSystem;
use crate::error::Result;
use crate::solver::banded::{lu_factor, BandMatrix};
use crate::solver::TimeGrid;

/// Result of the diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    /// Dominant modulus of the marching operator `F^{-1} G`.
    pub rho_ratio: f64,
    pub rho_ratio_converged: bool,
    /// `rho(Upsilon) = rho(E^{-1} S)`.
    pub rho_upsilon: f64,
    /// `rho(Psi) = rho(E^{-1} L)` (zero without jumps).
    pub rho_psi: f64,
    /// `rho(Upsilon) - rho(Psi)`.
    pub gap: f64,
    pub iterations: usize,
}

/// Estimates the dominant eigenvalue modulus of a linear operator via a
/// quadratic power iteration: fit `A^2 x = a A x + b x` in least squares
/// and read the companion roots, which handles complex pairs.
pub fn spectral_radius<F>(mut apply: F, n: usize, tol: f64, max_iter: usize) -> (f64, bool, usize)
where
    F: FnMut(&[f64], &mut [f64]),
{
    // Deterministic, not-too-symmetric start vector.
    let mut x0: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((i as f64) * 0.7).sin()).collect();
    normalize(&mut x0);
    let mut x1 = vec![0.0; n];
    apply(&x0, &mut x1);
    let n1 = norm(&x1);
    if n1 == 0.0 {
        return (0.0, true, 1);
    }
    let mut rho_prev = f64::NAN;
    let mut stable_hits = 0usize;
    let mut x2 = vec![0.0; n];
    for it in 0..max_iter {
        apply(&x1, &mut x2);
        // Least squares for x2 ~ a x1 + b x0.
        let (g11, g10, g00) = (dot(&x1, &x1), dot(&x1, &x0), dot(&x0, &x0));
        let (r1, r0) = (dot(&x2, &x1), dot(&x2, &x0));
        let det = g11 * g00 - g10 * g10;
        let rho = if det.abs() > 1e-300 {
            let a = (r1 * g00 - r0 * g10) / det;
            let b = (r0 * g11 - r1 * g10) / det;
            let disc = a * a + 4.0 * b;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                (0.5 * (a + sq)).abs().max((0.5 * (a - sq)).abs())
            } else {
                // Complex pair: |mu|^2 equals the product of the roots, -b.
                (-b).sqrt()
            }
        } else {
            norm(&x2) / norm(&x1).max(1e-300)
        };
        if (rho - rho_prev).abs() <= tol * rho.abs().max(1e-300) {
            stable_hits += 1;
            if stable_hits >= 4 {
                return (rho, true, it + 1);
            }
        } else {
            stable_hits = 0;
        }
        rho_prev = rho;
        // Shift the window and renormalize against overflow.
        std::mem::swap(&mut x0, &mut x1);
        std::mem::swap(&mut x1, &mut x2);
        let s = norm(&x1);
        if s > 0.0 {
            let inv = 1.0 / s;
            x0.iter_mut().for_each(|v| *v *= inv);
            x1.iter_mut().for_each(|v| *v *= inv);
        } else {
            return (0.0, true, it + 1);
        }
    }
    (rho_prev, false, max_iter)
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let s = norm(v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Restriction of full-column rows to the interior block.
fn interior_matrix(system: &BandedSystem, rows: &[crate::assembly::Row]) -> Result<BandMatrix> {
    let base = system.interior_base() as u32;
    let top = (system.grid.n_nodes() - system.interior_base()) as u32;
    let restricted: Vec<crate::assembly::Row> = rows
        .iter()
        .map(|row| {
            let mut out = crate::assembly::Row::default();
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                if c >= base && c < top {
                    out.cols.push(c - base);
                    out.vals.push(v);
                }
            }
            out
        })
        .collect();
    BandMatrix::from_rows(&restricted)
}

/// Runs the diagnostic for an assembled system at the given step count.
pub fn stability_diagnostic(
    system: &BandedSystem,
    time: TimeGrid,
    tol: f64,
) -> Result<StabilityReport> {
    let n_int = system.n_interior();
    let base = system.interior_base();
    let n_nodes = system.grid.n_nodes();
    let split = system.split_lhs(time.dt);
    let f_lu = lu_factor(BandMatrix::from_rows(&split.interior)?)?;
    let e_lu = lu_factor(interior_matrix(system, &system.mass)?)?;
    let s_int = interior_matrix(system, &system.steady)?;
    let inv_dt = 1.0 / time.dt;

    let mut full = vec![0.0; n_nodes];
    let mut scratch = system.jump.make_scratch();
    let mut mass_out = vec![0.0; n_int];

    // rho(F^{-1} G): G x = E x / dt + L x on interior vectors (zero
    // boundary extension).
    let apply_ratio = |x: &[f64], out: &mut [f64]| {
        let (full, scratch, mass_out) = (&mut full, &mut scratch, &mut mass_out);
        full.iter_mut().for_each(|v| *v = 0.0);
        full[base..base + n_int].copy_from_slice(x);
        system.apply_mass(full, mass_out);
        for (o, m) in out.iter_mut().zip(mass_out.iter()) {
            *o = m * inv_dt;
        }
        system.jump.apply(full, out, scratch);
        f_lu.solve_in_place(out);
    };
    let (rho_ratio, converged, iterations) = spectral_radius(apply_ratio, n_int, tol, 5000);

    // rho(Upsilon) = rho(E^{-1} S).
    let mut sx = vec![0.0; n_int];
    let apply_upsilon = |x: &[f64], out: &mut [f64]| {
        s_int.matvec(x, &mut sx);
        out.copy_from_slice(&sx);
        e_lu.solve_in_place(out);
    };
    let (rho_upsilon, _, _) = spectral_radius(apply_upsilon, n_int, tol, 5000);

    // rho(Psi) = rho(E^{-1} L).
    let rho_psi = if system.jump.is_none() {
        0.0
    } else {
        let mut full2 = vec![0.0; n_nodes];
        let mut scratch2 = system.jump.make_scratch();
        let apply_psi = |x: &[f64], out: &mut [f64]| {
            full2.iter_mut().for_each(|v| *v = 0.0);
            full2[base..base + n_int].copy_from_slice(x);
            out.iter_mut().for_each(|v| *v = 0.0);
            system.jump.apply(&full2, out, &mut scratch2);
            e_lu.solve_in_place(out);
        };
        spectral_radius(apply_psi, n_int, tol, 5000).0
    };

    Ok(StabilityReport {
        rho_ratio,
        rho_ratio_converged: converged,
        rho_upsilon,
        rho_psi,
        gap: rho_upsilon - rho_psi,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, SchemeConfig};
    use crate::models::{ModelKind, ModelSpec, OptionRight, OptionStyle};
    use crate::rbf::Smoothness;
    use crate::transform::{NodeGrid, StretchParams};
    use std::sync::Arc;

    #[test]
    fn identity_operator_has_unit_radius() {
        let (rho, ok, _) = spectral_radius(|x, out| out.copy_from_slice(x), 40, 1e-12, 100);
        assert!(ok);
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_with_complex_pair_is_resolved() {
        // 2-D rotation scaled by 0.9 has eigenvalues 0.9 e^{+-i theta}.
        let th = 0.7f64;
        let (c, s) = (th.cos() * 0.9, th.sin() * 0.9);
        let apply = |x: &[f64], out: &mut [f64]| {
            out[0] = c * x[0] - s * x[1];
            out[1] = s * x[0] + c * x[1];
        };
        let (rho, ok, _) = spectral_radius(apply, 2, 1e-10, 500);
        assert!(ok);
        assert!((rho - 0.9).abs() < 1e-9, "{rho}");
    }

    #[test]
    fn zero_operator_has_zero_radius() {
        let (rho, ok, _) =
            spectral_radius(|_, out| out.iter_mut().for_each(|v| *v = 0.0), 10, 1e-10, 50);
        assert!(ok);
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn diagonal_dominant_eigenvalue_found() {
        let d: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.1).collect();
        let dd = d.clone();
        let (rho, ok, _) = spectral_radius(
            move |x, out| {
                for ((o, &v), &l) in out.iter_mut().zip(x).zip(&dd) {
                    *o = v * l;
                }
            },
            50,
            1e-10,
            2000,
        );
        assert!(ok);
        assert!((rho - d[49]).abs() < 1e-7 * d[49], "{rho}");
    }

    #[test]
    fn sv_marching_operator_is_contractive() {
        let spec = ModelSpec {
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
            right: OptionRight::Put,
            style: OptionStyle::European,
        };
        let grid =
            Arc::new(NodeGrid::build(16, 8, StretchParams::defaults(10.0, 0.0625)).unwrap());
        let system = assemble(&spec, grid, SchemeConfig::new(Smoothness::C4)).unwrap();
        let report =
            stability_diagnostic(&system, TimeGrid::new(0.25, 8).unwrap(), 1e-8).unwrap();
        assert!(report.rho_ratio < 1.0, "rho = {}", report.rho_ratio);
        assert!(report.rho_psi == 0.0);
    }
}
