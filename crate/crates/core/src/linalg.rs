//! Complex dense and banded linear algebra shared by the solvers.
//!
//! Dense work goes through `nalgebra`; the block-banded systems produced by the
//! finite-difference discretizations are factored by [`BandLu`], a partial-pivoting
//! band LU in the LINPACK layout (multipliers are not permuted after they are formed).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `ℓ_q` norm of a complex slice.
pub fn lq_norm(v: &[C64], q: f64) -> f64 {
    if q == 2.0 {
        return v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    if q.is_infinite() {
        return v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    v.iter().map(|z| z.norm().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Dense LU inverse with a relative-pivot check.
pub fn checked_inverse(m: &CMat, rel_tol: f64) -> Option<CMat> {
    let lu = m.clone().lu();
    let u = lu.u();
    let n = u.nrows();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > rel_tol * scale) {
        return None;
    }
    lu.try_inverse()
}

/// Smallest relative LU pivot of a dense matrix (0 when singular).
pub fn relative_pivot(m: &CMat) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let lu = m.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min) / scale
}

/// Returns `(φ₁(Z), φ₂(Z))` with `φ₁(Z) = Z⁻¹(eᶻ − I)` and `φ₂(Z) = Z⁻²(eᶻ − I − Z)`,
/// read off the exponential of the augmented block matrix `[[Z, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn phi_functions(z: &CMat) -> (CMat, CMat) {
    let n = z.nrows();
    let mut aug = CMat::zeros(3 * n, 3 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(z);
    for i in 0..n {
        aug[(i, n + i)] = ONE;
        aug[(n + i, 2 * n + i)] = ONE;
    }
    let e = aug.exp();
    let phi1 = e.view((0, n), (n, n)).into_owned();
    let phi2 = e.view((0, 2 * n), (n, n)).into_owned();
    (phi1, phi2)
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Rows are stored over the widened window `[i - kl, i + kl + ku]` so the
/// factorization can absorb the fill-in produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![ZERO; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku && i < self.n && j < self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            ZERO
        }
    }

    /// Adds `v` to entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` is outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Clears row `i`.
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let s = self.slot(i, j);
            self.data[s] = ZERO;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = ZERO;
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                acc += self.data[self.slot(i, j)] * xj;
            }
            *yi = acc;
        }
        y
    }

    /// Dense copy, for small systems and tests.
    pub fn to_dense(&self) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::SingularSystem { smallest_pivot: 0.0 });
        }
        let mut pivots = vec![0usize; n];
        let mut smallest = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].norm();
            for r in k + 1..=last_row {
                let v = self.data[self.slot(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[k] = p;
            smallest = smallest.min(best);
            if best <= 1e-14 * scale {
                return Err(Error::SingularSystem {
                    smallest_pivot: best,
                });
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for r in k + 1..=last_row {
                let s = self.slot(r, k);
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.data[self.slot(k, j)];
                    if kj != ZERO {
                        let rj = self.slot(r, j);
                        self.data[rj] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu {
            band: self,
            pivots,
            smallest_pivot: smallest,
        })
    }
}

/// Factored band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
    smallest_pivot: f64,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.band.n
    }

    pub fn smallest_pivot(&self) -> f64 {
        self.smallest_pivot
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let a = &self.band;
        let n = a.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == ZERO {
                continue;
            }
            for (r, br) in b.iter_mut().enumerate().take((k + a.kl).min(n - 1) + 1).skip(k + 1) {
                *br -= a.data[a.slot(r, k)] * bk;
            }
        }
        for i in (0..n).rev() {
            let last = (i + a.kl + a.ku).min(n - 1);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(last + 1).skip(i + 1) {
                acc -= a.data[a.slot(i, j)] * bj;
            }
            b[i] = acc / a.data[a.slot(i, i)];
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
