//! Banded Cholesky factorization of Hermitian positive definite matrices.
//!
//! The fiber matrices are sparse with grid-graph structure; after a reverse
//! Cuthill-McKee reordering their bandwidth is O(n^(m-1)) and a band
//! factorization costs O(dim * bw^2), which is cheap at desk scale.

use crate::error::{Error, Result};
use crate::sparse::{rcm_ordering, CsrMatrix};
use num_complex::Complex64;

/// Lower-triangular band factor L with K = L L^H, stored column-major:
/// `data[j * (bw + 1) + (i - j)] = L[i, j]` for `j <= i <= j + bw`.
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    data: Vec<Complex64>,
}

impl BandedCholesky {
    /// Factors a Hermitian positive definite matrix given in CSR form,
    /// in its present ordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let bw = a.bandwidth();
        let lda = bw + 1;
        let mut data = vec![Complex64::new(0.0, 0.0); n * lda];
        // pack lower triangle
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let j = j as usize;
                if j <= i {
                    data[j * lda + (i - j)] = v;
                }
            }
        }
        // left-looking factorization
        for j in 0..n {
            let kmin = j.saturating_sub(bw);
            for k in kmin..j {
                let ljk = data[k * lda + (j - k)];
                if ljk.norm_sqr() == 0.0 {
                    continue;
                }
                let c = ljk.conj();
                let imax = (k + bw).min(n - 1);
                for i in j..=imax {
                    let lik = data[k * lda + (i - k)];
                    data[j * lda + (i - j)] -= lik * c;
                }
            }
            let d = data[j * lda].re;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "banded Cholesky pivot {d:.3e} at column {j}"
                )));
            }
            let l = d.sqrt();
            data[j * lda] = Complex64::new(l, 0.0);
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                data[j * lda + (i - j)] /= l;
            }
        }
        Ok(BandedCholesky { dim: n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves K x = b in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        debug_assert_eq!(b.len(), self.dim);
        let lda = self.bw + 1;
        // forward: L y = b
        for j in 0..self.dim {
            let y = b[j] / self.data[j * lda];
            b[j] = y;
            let imax = (j + self.bw).min(self.dim - 1);
            for i in (j + 1)..=imax {
                b[i] -= self.data[j * lda + (i - j)] * y;
            }
        }
        // backward: L^H x = y
        for j in (0..self.dim).rev() {
            let imax = (j + self.bw).min(self.dim - 1);
            let mut acc = b[j];
            for i in (j + 1)..=imax {
                acc -= self.data[j * lda + (i - j)].conj() * b[i];
            }
            b[j] = acc / self.data[j * lda].conj();
        }
    }
}

/// Shifted factorization of K = A - shift * B in RCM ordering, exposing
/// solves in the original ordering.
pub struct ShiftedFactor {
    perm: Vec<usize>,
    inv: Vec<usize>,
    chol: BandedCholesky,
    scratch: std::cell::RefCell<Vec<Complex64>>,
}

impl ShiftedFactor {
    pub fn new(a: &CsrMatrix, b: &CsrMatrix, shift: f64) -> Result<Self> {
        let k = a.add_scaled(b, Complex64::new(-shift, 0.0));
        let perm = rcm_ordering(&k);
        let kp = k.permute_sym(&perm);
        let chol = BandedCholesky::factor(&kp).map_err(|e| match e {
            Error::NotPositiveDefinite(msg) => Error::NotPositiveDefinite(format!(
                "shifted matrix A - ({shift}) B is not positive definite ({msg}); choose shift below the smallest eigenvalue"
            )),
            other => other,
        })?;
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let scratch = std::cell::RefCell::new(vec![Complex64::new(0.0, 0.0); perm.len()]);
        Ok(ShiftedFactor { perm, inv, chol, scratch })
    }

    /// Solves (A - shift B) x = rhs, returning x in the original ordering.
    pub fn solve(&self, rhs: &[Complex64], x: &mut [Complex64]) {
        let mut tmp = self.scratch.borrow_mut();
        for new in 0..self.perm.len() {
            tmp[new] = rhs[self.perm[new]];
        }
        self.chol.solve_in_place(&mut tmp);
        for old in 0..self.perm.len() {
            x[old] = tmp[self.inv[old]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CooMatrix;

    #[test]
    fn factors_and_solves_tridiagonal() {
        let n = 50;
        let mut coo = CooMatrix::new(n);
        for i in 0..n {
            coo.push(i, i, Complex64::new(4.0, 0.0));
        }
        for i in 0..n - 1 {
            coo.push(i, i + 1, Complex64::new(-1.0, 0.5));
            coo.push(i + 1, i, Complex64::new(-1.0, -0.5));
        }
        let k = coo.to_csr();
        let chol = BandedCholesky::factor(&k).unwrap();
        let b: Vec<Complex64> =
            (0..n).map(|i| Complex64::new((i % 7) as f64, -((i % 3) as f64))).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let mut kx = vec![Complex64::new(0.0, 0.0); n];
        k.matvec(&x, &mut kx);
        for i in 0..n {
            assert!((kx[i] - b[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let k = CsrMatrix::diagonal(&[1.0, -1.0]);
        assert!(BandedCholesky::factor(&k).is_err());
    }

    #[test]
    fn shifted_factor_solves_periodic_ring() {
        let n = 32;
        let mut coo = CooMatrix::new(n);
        for i in 0..n {
            coo.push_edge(i, (i + 1) % n, 1.0, Complex64::new(1.0, 0.0));
        }
        let a = coo.to_csr();
        let b = CsrMatrix::identity(n);
        let f = ShiftedFactor::new(&a, &b, -1.0).unwrap();
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + i as f64, 0.3)).collect();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        f.solve(&rhs, &mut x);
        // check (A + I) x = rhs
        let k = a.add_scaled(&b, Complex64::new(1.0, 0.0));
        let mut kx = vec![Complex64::new(0.0, 0.0); n];
        k.matvec(&x, &mut kx);
        for i in 0..n {
            assert!((kx[i] - rhs[i]).norm() < 1e-10);
        }
    }
}
