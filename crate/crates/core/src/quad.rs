//! Quadrature rules.
//!
//! The discretization itself only ever uses fixed 4-point Gauss-Legendre
//! rules mapped onto segments, arcs or radial spans. The adaptive
//! Gauss-Kronrod rule lives here too but is reserved for oracles and tests.

use crate::error::{PricerError, Result};

/// 4-point Gauss-Legendre nodes on [-1, 1].
pub const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_26,
    0.339_981_043_584_856_26,
    0.861_136_311_594_052_6,
];

/// 4-point Gauss-Legendre weights on [-1, 1].
pub const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_85,
];

/// Maps the 4-point rule onto `[a, b]`, returning `(abscissa, weight)` pairs.
#[inline]
pub fn gl4_on(a: f64, b: f64) -> [(f64, f64); 4] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 4];
    for (k, (x, w)) in GL4_NODES.iter().zip(GL4_WEIGHTS.iter()).enumerate() {
        out[k] = (mid + half * x, half * w);
    }
    out
}

/// Integrates `f` over `[a, b]` with one 4-point panel.
pub fn gl4_integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    gl4_on(a, b).iter().map(|&(x, w)| w * f(x)).sum()
}

/// Integrates `f` over `[a, b]` split into `n` equal 4-point panels.
pub fn gl4_composite<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        acc += gl4_integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f);
    }
    acc
}

// 15-point Kronrod extension of the 7-point Gauss rule (positive half).
const K15_NODES: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];

const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];

const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One Gauss-Kronrod 7/15 panel over `[a, b]`: returns `(estimate, error)`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = K15_WEIGHTS[7] * f(mid);
    let mut gauss = G7_WEIGHTS[3] * f(mid);
    for i in 0..7 {
        let dx = half * K15_NODES[i];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += K15_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * pair;
        }
    }
    kronrod *= half;
    gauss *= half;
    let diff = (kronrod - gauss).abs();
    // QUADPACK-style sharpened error estimate.
    let err = if diff > 0.0 { diff * (200.0 * diff).sqrt().min(1.0).max(diff * 1e-6) } else { 0.0 };
    (kronrod, err.max(diff * 1e-3))
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`. Oracle-side use only.
pub fn adaptive_quadrature<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        floor: f64,
        depth: u32,
    ) -> Result<f64> {
        let (value, err) = gk15(f, a, b);
        // Accept on the absolute budget, on a near-machine error relative to
        // the whole integral, or when the panel has shrunk to nothing.
        if err <= tol.max(floor) || b - a < 1e-14 * a.abs().max(b.abs()) {
            return Ok(value);
        }
        if depth == 0 {
            return Err(PricerError::Oracle(format!(
                "adaptive quadrature failed to converge on [{a}, {b}]: err = {err:.3e}"
            )));
        }
        let mid = 0.5 * (a + b);
        // Split the budget by sqrt(2), not 2: a jump discontinuity shrinks
        // the panel error linearly with width, and an exactly halved budget
        // would never be caught.
        let child = tol * std::f64::consts::FRAC_1_SQRT_2;
        Ok(recurse(f, a, mid, child, floor, depth - 1)?
            + recurse(f, mid, b, child, floor, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let floor = 1e-13 * gk15(f, a, b).0.abs();
    recurse(f, a, b, tol, floor, max_depth)
}
