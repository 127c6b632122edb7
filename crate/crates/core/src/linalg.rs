//! Small dense complex-matrix kernels for the per-frequency hot loops.
//!
//! Matrices here are row-major `n x n` slices; nalgebra is used at the API
//! boundary.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub(crate) fn to_row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn from_row_major(n: usize, data: &[Complex64]) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(n, n, data)
}

pub(crate) fn identity(n: usize) -> Vec<Complex64> {
    let mut m = vec![ZERO; n * n];
    for i in 0..n {
        m[i * n + i] = ONE;
    }
    m
}

/// `out = a * b`.
#[inline]
pub(crate) fn matmul(a: &[Complex64], b: &[Complex64], out: &mut [Complex64], n: usize) {
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        row.fill(ZERO);
        for k in 0..n {
            let aik = a[i * n + k];
            let brow = &b[k * n..(k + 1) * n];
            for (o, bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

/// Scale row `i` of `m` by `d[i]`, i.e. `m <- diag(d) * m`.
#[inline]
pub(crate) fn scale_rows(m: &mut [Complex64], d: &[Complex64], n: usize) {
    for (i, di) in d.iter().enumerate() {
        for v in &mut m[i * n..(i + 1) * n] {
            *v *= di;
        }
    }
}

/// `y = a * x` for a row-major `n x n` matrix.
#[inline]
pub(crate) fn matvec(a: &[Complex64], x: &[Complex64], y: &mut [Complex64], n: usize) {
    for i in 0..n {
        let mut acc = ZERO;
        for (aij, xj) in a[i * n..(i + 1) * n].iter().zip(x) {
            acc += aij * xj;
        }
        y[i] = acc;
    }
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Haar-distributed `n x n` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Seed;

    #[test]
    fn haar_is_unitary() {
        let mut rng = Seed::new(3).rng();
        for n in [2, 4, 24] {
            let u = haar_unitary(&mut rng, n);
            let e = (u.adjoint() * &u - DMatrix::<Complex64>::identity(n, n)).norm();
            assert!(e < 1e-12, "n={n} err={e}");
        }
    }

    #[test]
    fn haar_diagonal_phases_are_uniform() {
        // E[U_00] = 0 for Haar; without the R-phase fix QR output is biased.
        let mut rng = Seed::new(4).rng();
        let mut acc = ZERO;
        let trials = 4000;
        for _ in 0..trials {
            acc += haar_unitary(&mut rng, 4)[(0, 0)];
        }
        assert!((acc / trials as f64).norm() < 0.03);
    }

    #[test]
    fn matmul_matches_nalgebra() {
        let mut rng = Seed::new(5).rng();
        let a = haar_unitary(&mut rng, 5);
        let b = haar_unitary(&mut rng, 5);
        let mut out = vec![ZERO; 25];
        matmul(&to_row_major(&a), &to_row_major(&b), &mut out, 5);
        let e = (from_row_major(5, &out) - a * b).norm();
        assert!(e < 1e-12);
    }
}
