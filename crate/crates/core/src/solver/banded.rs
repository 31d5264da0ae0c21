//! Banded LU factorization with partial pivoting.
//!
//! LAPACK-style band storage: column `j` holds rows `j - ku .. j + kl`
//! contiguously, with `kl` extra superdiagonals of headroom for pivoting
//! fill-in. The factorization runs once per pricing run; every time step
//! then costs one forward/backward sweep.

use crate::assembly::Row;
use crate::error::{PricerError, Result};

/// Band matrix in expanded storage ready for in-place factorization.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    /// Leading dimension `2*kl + ku + 1`.
    ldab: usize,
    /// Column-major: entry `(i, j)` lives at `data[j*ldab + kl + ku + i - j]`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, data: vec![0.0; n * ldab] }
    }

    /// Builds from sparse rows (already restricted to interior columns).
    pub fn from_rows(rows: &[Row]) -> Result<Self> {
        let n = rows.len();
        let mut bw = 0usize;
        for (i, row) in rows.iter().enumerate() {
            for &c in &row.cols {
                bw = bw.max((c as usize).abs_diff(i));
            }
        }
        let mut m = BandMatrix::zeros(n, bw, bw);
        for (i, row) in rows.iter().enumerate() {
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                m.set(i, c as usize, v);
            }
        }
        Ok(m)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i},{j}) outside band");
        j * self.ldab + self.kl + self.ku + i - j
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// Dense matrix-vector product; diagnostic use on small systems.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let xj = x[j];
            for i in lo..=hi {
                out[i] += self.get(i, j) * xj;
            }
        }
    }
}

/// Factorized band matrix.
#[derive(Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Effective upper bandwidth after fill-in: `ku + kl`.
    kue: usize,
    ldab: usize,
    data: Vec<f64>,
    pivots: Vec<u32>,
}

/// Factors `a` in place with partial pivoting.
pub fn lu_factor(a: BandMatrix) -> Result<BandedLu> {
    let BandMatrix { n, kl, ku, ldab, mut data } = a;
    let kue = kl + ku;
    let mut pivots = vec![0u32; n];
    for k in 0..n {
        // Pivot search within the column's lower band.
        let reach = (n - 1 - k).min(kl);
        let col_base = k * ldab + kl + ku;
        let mut p = 0usize;
        let mut best = data[col_base].abs();
        for t in 1..=reach {
            let v = data[col_base + t].abs();
            if v > best {
                best = v;
                p = t;
            }
        }
        if best == 0.0 {
            return Err(PricerError::SingularFactor { pivot: k });
        }
        pivots[k] = (k + p) as u32;
        let cols_hi = (k + kue).min(n - 1);
        if p != 0 {
            // Swap rows k and k+p across every column they share.
            for j in k..=cols_hi {
                let base = j * ldab + kl + ku + k - j;
                data.swap(base, base + p);
            }
        }
        let pivot = data[col_base];
        let inv = 1.0 / pivot;
        for t in 1..=reach {
            data[col_base + t] *= inv;
        }
        if reach == 0 {
            continue;
        }
        // Rank-1 update of the trailing block, column by column; each
        // column's rows are contiguous in band storage.
        let (head, tail) = data.split_at_mut((k + 1) * ldab);
        let lcol = &head[col_base + 1..col_base + 1 + reach];
        for j in k + 1..=cols_hi {
            let base = (j - k - 1) * ldab + kl + ku + k - j;
            let ujk = tail[base];
            if ujk != 0.0 {
                let seg = &mut tail[base + 1..base + 1 + reach];
                for (s, l) in seg.iter_mut().zip(lcol) {
                    *s -= ujk * l;
                }
            }
        }
    }
    Ok(BandedLu { n, kl, kue, ldab, data, pivots })
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let (n, kl, kue, ldab) = (self.n, self.kl, self.kue, self.ldab);
        // Entry (i, j) sits at data[j*ldab + kue + i - j]; the diagonal of
        // column k is therefore at k*ldab + kue.
        for k in 0..n {
            let p = self.pivots[k] as usize;
            if p != k {
                b.swap(k, p);
            }
            let reach = (n - 1 - k).min(kl);
            if reach == 0 {
                continue;
            }
            let bk = b[k];
            if bk != 0.0 {
                let base = k * ldab + kue;
                let lcol = &self.data[base + 1..base + 1 + reach];
                for (t, l) in lcol.iter().enumerate() {
                    b[k + 1 + t] -= l * bk;
                }
            }
        }
        // Backward sweep with U, row-wise: u(k, j) for j in k+1..=k+kue.
        for k in (0..n).rev() {
            let mut acc = b[k];
            let hi = (k + kue).min(n - 1);
            for j in k + 1..=hi {
                acc -= self.data[j * ldab + kue + k - j] * b[j];
            }
            b[k] = acc / self.data[k * ldab + kue];
        }
    }
}
