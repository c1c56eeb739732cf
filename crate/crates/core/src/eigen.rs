//! Eigenvalues of small dense complex Hermitian matrices.
//!
//! Two independent solvers share one contract (absolute eigenvalue accuracy
//! around `1e-12·‖A‖`):
//!
//! * [`jacobi_eigenvalues`], cyclic complex Jacobi rotations. Simple and
//!   unconditionally convergent, about `16n³` flops per sweep.
//! * [`tridiagonal_eigenvalues`], Householder reduction to a real symmetric
//!   tridiagonal matrix followed by implicit QL with Wilkinson shifts. About
//!   `5n³` flops in total; this is the default for the reverse-reconciliation
//!   integrand, which needs one eigensolve per grid point.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major square complex matrix assumed Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn from_rows(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Domain(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Which eigensolver to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenSolver {
    Jacobi,
    #[default]
    Householder,
}

impl EigenSolver {
    /// Eigenvalues in solver-dependent order.
    pub fn eigenvalues(&self, matrix: &HermitianMatrix) -> Result<Vec<f64>> {
        match self {
            EigenSolver::Jacobi => jacobi_eigenvalues(matrix),
            EigenSolver::Householder => tridiagonal_eigenvalues(matrix),
        }
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigenvalues (unsorted) by cyclic complex Jacobi rotations.
///
/// Each rotation first rephases column `q` so that `A_pq` becomes real and
/// positive, then applies a real plane rotation that annihilates it.
pub fn jacobi_eigenvalues(matrix: &HermitianMatrix) -> Result<Vec<f64>> {
    let n = matrix.dim;
    let mut a = matrix.data.clone();
    let idx = |i: usize, j: usize| i * n + j;
    let scale = matrix.norm().max(f64::MIN_POSITIVE);
    let off_norm = |a: &[Complex64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[idx(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= 1e-15 * scale {
            return Ok((0..n).map(|i| a[idx(i, i)].re).collect());
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[idx(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[idx(p, p)].re;
                let aqq = a[idx(q, q)].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    // rephased column q: y = A_kq · conj(phase)
                    let x = a[idx(k, p)];
                    let y = a[idx(k, q)] * phase.conj();
                    let new_p = x * c - y * s;
                    let new_q = x * s + y * c;
                    a[idx(k, p)] = new_p;
                    a[idx(p, k)] = new_p.conj();
                    a[idx(k, q)] = new_q;
                    a[idx(q, k)] = new_q.conj();
                }
                a[idx(p, p)] = Complex64::new(app - t * mag, 0.0);
                a[idx(q, q)] = Complex64::new(aqq + t * mag, 0.0);
                a[idx(p, q)] = Complex64::new(0.0, 0.0);
                a[idx(q, p)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    Err(Error::EigenConvergence {
        dim: n,
        iterations: JACOBI_MAX_SWEEPS,
        residual: off_norm(&a),
        location: String::new(),
    })
}

/// Eigenvalues (ascending) by Householder tridiagonalization and implicit QL.
pub fn tridiagonal_eigenvalues(matrix: &HermitianMatrix) -> Result<Vec<f64>> {
    let (mut diag, mut off) = householder_tridiagonal(matrix);
    tridiagonal_ql(&mut diag, &mut off)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// Reduces a Hermitian matrix to real symmetric tridiagonal form.
///
/// Returns the diagonal and the sub-diagonal magnitudes (`off[0] = 0`,
/// `off[i]` couples `i-1` and `i`). The complex sub-diagonal phases are
/// removed by a diagonal unitary, which preserves the spectrum.
pub fn householder_tridiagonal(matrix: &HermitianMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = matrix.dim;
    let mut a = matrix.data.clone();
    let idx = |i: usize, j: usize| i * n + j;
    let zero = Complex64::new(0.0, 0.0);
    let mut off = vec![0.0; n];
    let mut v = vec![zero; n];
    let mut w = vec![zero; n];
    for k in 0..n.saturating_sub(2) {
        let start = k + 1;
        let xnorm = (start..n).map(|i| a[idx(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            off[start] = 0.0;
            continue;
        }
        let x0 = a[idx(start, k)];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * xnorm;
        for i in start..n {
            v[i] = a[idx(i, k)];
        }
        v[start] -= alpha;
        let vnorm = (start..n).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            off[start] = x0.norm();
            continue;
        }
        for i in start..n {
            v[i] /= vnorm;
        }
        // p = A v on the trailing block
        for i in start..n {
            let mut s = zero;
            for j in start..n {
                s += a[idx(i, j)] * v[j];
            }
            w[i] = s;
        }
        // K = v† p (real for Hermitian A); q = p - K v
        let kk: f64 = (start..n).map(|i| (v[i].conj() * w[i]).re).sum();
        for i in start..n {
            w[i] -= v[i] * kk;
        }
        // A ← A - 2(v q† + q v†)
        for i in start..n {
            let vi = v[i];
            let wi = w[i];
            for j in start..n {
                a[idx(i, j)] -= (vi * w[j].conj() + wi * v[j].conj()) * 2.0;
            }
        }
        a[idx(start, k)] = alpha;
        a[idx(k, start)] = alpha.conj();
        for i in start + 1..n {
            a[idx(i, k)] = zero;
            a[idx(k, i)] = zero;
        }
        off[start] = xnorm;
    }
    if n >= 2 {
        off[n - 1] = a[idx(n - 1, n - 2)].norm();
    }
    let diag = (0..n).map(|i| a[idx(i, i)].re).collect();
    (diag, off)
}

const QL_MAX_ITERATIONS: usize = 60;

/// Eigenvalues of a real symmetric tridiagonal matrix, in place in `diag`.
///
/// `off[i]` is the element coupling rows `i-1` and `i`; it is destroyed.
pub fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    // shift so that e[i] couples i and i+1
    for i in 1..n {
        off[i - 1] = off[i];
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITERATIONS {
                return Err(Error::EigenConvergence {
                    dim: n,
                    iterations: iter,
                    residual: off[l].abs(),
                    location: String::new(),
                });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        // small LCG, enough for test matrices
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = HermitianMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, c(next(), 0.0));
            for j in i + 1..n {
                let z = c(next(), next());
                m.set(i, j, z);
                m.set(j, i, z.conj());
            }
        }
        m
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2, 1-i], [1+i, 3]]: trace 5, det 6 - 2 = 4 → (5 ± 3)/2
        let m = HermitianMatrix::from_rows(2, vec![c(2.0, 0.0), c(1.0, -1.0), c(1.0, 1.0), c(3.0, 0.0)]).unwrap();
        for solver in [EigenSolver::Jacobi, EigenSolver::Householder] {
            let mut ev = solver.eigenvalues(&m).unwrap();
            ev.sort_by(f64::total_cmp);
            assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_and_trivial_sizes() {
        let m = HermitianMatrix::from_rows(1, vec![c(0.7, 0.0)]).unwrap();
        assert_eq!(tridiagonal_eigenvalues(&m).unwrap(), vec![0.7]);
        assert_eq!(jacobi_eigenvalues(&m).unwrap(), vec![0.7]);
        let mut d = HermitianMatrix::zeros(4);
        for (i, v) in [3.0, -1.0, 0.5, 0.5].iter().enumerate() {
            d.set(i, i, c(*v, 0.0));
        }
        assert_eq!(tridiagonal_eigenvalues(&d).unwrap(), vec![-1.0, 0.5, 0.5, 3.0]);
    }

    #[test]
    fn rejects_wrong_shape() {
        assert!(HermitianMatrix::from_rows(3, vec![c(0.0, 0.0); 8]).is_err());
    }

    #[test]
    fn tridiagonal_reduction_preserves_invariants() {
        let m = random_hermitian(9, 3);
        let (d, e) = householder_tridiagonal(&m);
        let trace: f64 = d.iter().sum();
        assert!((trace - m.trace().re).abs() < 1e-12);
        // Frobenius norm is unitarily invariant
        let fro = (d.iter().map(|x| x * x).sum::<f64>() + 2.0 * e.iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert!((fro - m.norm()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn solvers_agree(n in 1usize..24, seed in 0u64..10_000) {
            let m = random_hermitian(n, seed);
            let mut j = jacobi_eigenvalues(&m).unwrap();
            j.sort_by(f64::total_cmp);
            let h = tridiagonal_eigenvalues(&m).unwrap();
            for (a, b) in j.iter().zip(&h) {
                prop_assert!((a - b).abs() < 1e-11, "{a} vs {b}");
            }
            let tr: f64 = h.iter().sum();
            prop_assert!((tr - m.trace().re).abs() < 1e-11);
            let sq: f64 = h.iter().map(|x| x * x).sum();
            prop_assert!((sq - m.norm().powi(2)).abs() < 1e-10);
        }
    }
}
