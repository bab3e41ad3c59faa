//! Sparse Hermitian generalized eigensolver A u = E Bm u for the k smallest
//! eigenvalues, plus a dense brute-force oracle used for validation.
//!
//! The sparse path is shift-inverted block subspace iteration with
//! Rayleigh-Ritz extraction in the Bm inner product: the shifted matrix
//! A - sigma Bm (sigma <= 0, safe for PSD A) is factored once per problem by
//! banded Cholesky in RCM ordering, and a block of k plus a few buffer
//! vectors is iterated until the true residuals ||A u - E Bm u|| meet the
//! tolerance. Blocks capture degenerate clusters with their multiplicity,
//! which single-vector Krylov iterations miss.

use crate::banded::ShiftedFactor;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Options for the sparse solver.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Residual tolerance: converged when
    /// ||A u - E Bm u|| <= tol * max(||A u||, |E| ||Bm u||, eps_scale).
    pub tol: f64,
    /// Initial spectral-transform shift (< 0); backed off geometrically when
    /// the shifted matrix fails to factor (spectrum dipping below it). The
    /// default -1 is immediately valid for PSD stiffness.
    pub shift: f64,
    pub max_iterations: usize,
    /// Deterministic seed for the start block.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, shift: -1.0, max_iterations: 300, seed: 0x0b1_0c4 }
    }
}

/// Converged eigenpairs, ascending, Bm-orthonormal.
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn check_mass(b: &CsrMatrix) -> Result<()> {
    if b.is_diagonal() {
        for d in b.diag() {
            if !(d.re > 0.0) || d.im.abs() > 1e-14 * d.re {
                return Err(Error::NotPositiveDefinite(format!("mass diagonal entry {d}")));
            }
        }
    }
    Ok(())
}

/// Computes the k smallest eigenvalues (with multiplicity) and
/// Bm-orthonormal eigenvectors of the pencil (A, Bm).
pub fn smallest_eigenpairs(
    a: &CsrMatrix,
    b: &CsrMatrix,
    k: usize,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    let dim = a.dim();
    if b.dim() != dim {
        return Err(Error::InvalidSpec("matrix dimensions differ".into()));
    }
    if k == 0 || k + 1 > dim {
        return Err(Error::InvalidSpec(format!(
            "requested k = {k} outside 1..=dim-1 for dim = {dim}"
        )));
    }
    check_mass(b)?;
    // families with a zero-order term can dip below the default shift; back
    // the shift off geometrically until A - shift B factors
    let mut factor = None;
    let mut shift = opts.shift.min(-f64::MIN_POSITIVE);
    for _ in 0..8 {
        match ShiftedFactor::new(a, b, shift) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(Error::NotPositiveDefinite(_)) => shift *= 8.0,
            Err(e) => return Err(e),
        }
    }
    let factor =
        factor.ok_or_else(|| Error::NotPositiveDefinite("no valid spectral shift found".into()))?;
    let scale = a.inf_norm().max(b.inf_norm()).max(f64::MIN_POSITIVE);
    // a degenerate cluster straddling the block boundary can stall the
    // iteration on the trailing Ritz pairs; retry once with a wider block
    let p = (k + k.max(6)).min(dim);
    match block_iterate(a, b, k, p, &factor, scale, opts) {
        Err(Error::NoConvergence { .. }) if p < dim => {
            block_iterate(a, b, k, (p + k.max(4)).min(dim), &factor, scale, opts)
        }
        other => other,
    }
}

fn block_iterate(
    a: &CsrMatrix,
    b: &CsrMatrix,
    k: usize,
    p: usize,
    factor: &ShiftedFactor,
    scale: f64,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    let dim = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (dim as u64).rotate_left(17));
    // block of p columns, dim x p
    let mut x: Vec<Vec<Complex64>> = (0..p)
        .map(|_| {
            (0..dim)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect()
        })
        .collect();
    let mut ritz: Vec<f64> = vec![f64::NAN; p];
    let mut best_res: Vec<f64> = vec![f64::INFINITY; k];
    let mut bx = vec![Complex64::new(0.0, 0.0); dim];
    let mut iterations = 0;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        // W = (A - sigma B)^-1 B X
        let mut w: Vec<Vec<Complex64>> = Vec::with_capacity(p);
        for col in &x {
            b.matvec(col, &mut bx);
            let mut out = vec![Complex64::new(0.0, 0.0); dim];
            factor.solve(&bx, &mut out);
            w.push(out);
        }
        // B-orthonormalize W via Cholesky of the Gram matrix
        let bw: Vec<Vec<Complex64>> = w
            .iter()
            .map(|col| {
                let mut out = vec![Complex64::new(0.0, 0.0); dim];
                b.matvec(col, &mut out);
                out
            })
            .collect();
        let mut gram = DMatrix::<Complex64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                gram[(i, j)] = dot(&bw[i], &w[j]);
            }
        }
        let gram = hermitize(gram);
        let chol = match Cholesky::new(gram) {
            Some(c) => c,
            None => {
                // block became numerically rank deficient; refresh the
                // offending directions with fresh random vectors
                for col in x.iter_mut() {
                    for v in col.iter_mut() {
                        *v += Complex64::new(
                            1e-8 * (rng.gen::<f64>() - 0.5),
                            1e-8 * (rng.gen::<f64>() - 0.5),
                        );
                    }
                }
                continue;
            }
        };
        let l = chol.l();
        // W <- W L^-H  (so that W^H B W = I)
        let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(p);
        for j in 0..p {
            let mut col = w[j].clone();
            for i in 0..j {
                let lji = l[(j, i)].conj();
                for (cv, qv) in col.iter_mut().zip(&q[i]) {
                    *cv -= lji * qv;
                }
            }
            let d = l[(j, j)].re;
            for cv in col.iter_mut() {
                *cv /= d;
            }
            q.push(col);
        }
        // Rayleigh-Ritz: H = Q^H A Q
        let aq: Vec<Vec<Complex64>> = q
            .iter()
            .map(|col| {
                let mut out = vec![Complex64::new(0.0, 0.0); dim];
                a.matvec(col, &mut out);
                out
            })
            .collect();
        let mut hmat = DMatrix::<Complex64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                hmat[(i, j)] = dot(&q[i], &aq[j]);
            }
        }
        let hmat = hermitize(hmat);
        let eig = SymmetricEigen::new(hmat);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        // rotate the block to the Ritz basis
        let mut xr: Vec<Vec<Complex64>> = Vec::with_capacity(p);
        for (slot, &col_idx) in order.iter().enumerate() {
            let mut col = vec![Complex64::new(0.0, 0.0); dim];
            for i in 0..p {
                let s = eig.eigenvectors[(i, col_idx)];
                for (cv, qv) in col.iter_mut().zip(&q[i]) {
                    *cv += s * qv;
                }
            }
            ritz[slot] = eig.eigenvalues[col_idx];
            xr.push(col);
        }
        x = xr;
        // residual check on the first k Ritz pairs
        let mut all_ok = true;
        for i in 0..k {
            let e = ritz[i];
            let mut au = vec![Complex64::new(0.0, 0.0); dim];
            a.matvec(&x[i], &mut au);
            b.matvec(&x[i], &mut bx);
            let mut r2 = 0.0;
            let mut au2 = 0.0;
            let mut bu2 = 0.0;
            let mut u2 = 0.0;
            for j in 0..dim {
                r2 += (au[j] - Complex64::new(e, 0.0) * bx[j]).norm_sqr();
                au2 += au[j].norm_sqr();
                bu2 += bx[j].norm_sqr();
                u2 += x[i][j].norm_sqr();
            }
            let res = r2.sqrt();
            best_res[i] = res;
            // the scale * ||u|| floor keeps the test meaningful for an exact
            // kernel vector, where both ||A u|| and |E| ||Bm u|| vanish
            let thresh =
                opts.tol * au2.sqrt().max(e.abs() * bu2.sqrt()).max(scale * u2.sqrt());
            if res > thresh {
                all_ok = false;
            }
        }
        if all_ok {
            return Ok(EigenResult {
                eigenvalues: ritz[..k].to_vec(),
                eigenvectors: x.into_iter().take(k).collect(),
                residuals: best_res,
                iterations,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations,
        worst_residual: best_res.iter().cloned().fold(0.0, f64::max),
        estimates: ritz[..k].to_vec(),
        residuals: best_res,
    })
}

fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn hermitize(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mh = m.adjoint();
    (m + mh).scale(0.5)
}

/// Default dimension cap for the dense oracle.
pub const DENSE_ORACLE_CAP: usize = 2000;

/// Full ascending spectrum by dense reduction to standard form
/// (Cholesky of the mass). Independent of the sparse path.
pub fn dense_oracle(a: &CsrMatrix, b: &CsrMatrix, cap: Option<usize>) -> Result<Vec<f64>> {
    let cap = cap.unwrap_or(DENSE_ORACLE_CAP);
    let dim = a.dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let ad = a.to_dense();
    let bd = b.to_dense();
    check_mass(b)?;
    let chol = Cholesky::new(hermitize(bd))
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix in dense oracle".into()))?;
    let l = chol.l();
    // nalgebra's complex Cholesky takes complex square roots of negative
    // pivots instead of failing; positive-definiteness means real positive
    // diagonal in the factor
    for i in 0..dim {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re {
            return Err(Error::NotPositiveDefinite("mass matrix in dense oracle".into()));
        }
    }
    // C = L^-1 A L^-H
    let mut c = hermitize(ad);
    l.solve_lower_triangular_mut(&mut c);
    let mut ct = c.adjoint();
    l.solve_lower_triangular_mut(&mut ct);
    let c = hermitize(ct.adjoint());
    let eig = SymmetricEigen::new(c);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(vals)
}

/// Bm-weighted inner product, exposed for projection computations.
pub fn b_inner(b: &CsrMatrix, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let mut by = vec![Complex64::new(0.0, 0.0); y.len()];
    b.matvec(y, &mut by);
    dot(x, &by)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CooMatrix;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn diagonal_case() {
        let a = CsrMatrix::diagonal(&[3.0, 1.0, 2.0]);
        let b = CsrMatrix::identity(3);
        let r = smallest_eigenpairs(&a, &b, 2, &SolveOptions::default()).unwrap();
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_identity_and_zero() {
        let b = CsrMatrix::identity(5);
        let vals = dense_oracle(&b, &b, None).unwrap();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-13);
        }
        let zero = CooMatrix::new(5).to_csr();
        let vals = dense_oracle(&zero, &b, None).unwrap();
        for v in vals {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn oracle_cap() {
        let b = CsrMatrix::identity(10);
        assert!(dense_oracle(&b, &b, Some(5)).is_err());
    }

    #[test]
    fn periodic_laplacian_closed_form() {
        // periodic 5-point Laplacian, n=8, theta=0: generalized eigenvalues
        // (4/h^2)(sin^2(pi j / n) + sin^2(pi l / n))
        let n = 8usize;
        let dim = n * n;
        let h = 1.0 / n as f64;
        let mut coo = CooMatrix::new(dim);
        for i in 0..n {
            for j in 0..n {
                let p = i + n * j;
                coo.push_edge(p, (i + 1) % n + n * j, 1.0, c(1.0));
                coo.push_edge(p, i + n * ((j + 1) % n), 1.0, c(1.0));
            }
        }
        let a = coo.to_csr();
        let b = CsrMatrix::diagonal(&vec![h * h; dim]);
        let mut expected: Vec<f64> = (0..n)
            .flat_map(|j| {
                (0..n).map(move |l| {
                    let s = |t: usize| (std::f64::consts::PI * t as f64 / n as f64).sin().powi(2);
                    4.0 / (h * h) * (s(j) + s(l))
                })
            })
            .collect();
        expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let r = smallest_eigenpairs(&a, &b, 4, &SolveOptions::default()).unwrap();
        for i in 0..4 {
            assert!(
                (r.eigenvalues[i] - expected[i]).abs() < 1e-8 * (1.0 + expected[i]),
                "k={} got {} want {}",
                i,
                r.eigenvalues[i],
                expected[i]
            );
        }
        // multiplicity: eigenvalue 4/h^2 sin^2(pi/n) appears 4 times
        assert!((expected[5] - expected[4]).abs() > 1.0); // sanity on the gap
        assert!((expected[4] - expected[1]).abs() < 1e-9);
        let r = smallest_eigenpairs(&a, &b, 5, &SolveOptions::default()).unwrap();
        for i in 1..=4 {
            assert!((r.eigenvalues[i] - expected[i]).abs() < 1e-8 * (1.0 + expected[i]));
        }
        // oracle agreement on the head
        let oracle = dense_oracle(&a, &b, None).unwrap();
        for i in 0..5 {
            assert!((r.eigenvalues[i] - oracle[i]).abs() < 1e-8 * (1.0 + oracle[i]));
        }
    }

    #[test]
    fn random_psd_pair_matches_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let dim = 50;
        // A = G^H G (PSD), B = I + small diag perturbation (PD)
        let g = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let ad = g.adjoint() * &g;
        let mut coo = CooMatrix::new(dim);
        for i in 0..dim {
            for j in 0..dim {
                coo.push(i, j, ad[(i, j)]);
            }
        }
        let a = coo.to_csr();
        let b = CsrMatrix::diagonal(&(0..dim).map(|i| 1.0 + 0.1 * (i as f64 / dim as f64)).collect::<Vec<_>>());
        let oracle = dense_oracle(&a, &b, None).unwrap();
        let r = smallest_eigenpairs(&a, &b, 10, &SolveOptions::default()).unwrap();
        for i in 0..10 {
            assert!(
                (r.eigenvalues[i] - oracle[i]).abs() <= 1e-8 * oracle[i].abs().max(1.0),
                "k={} sparse {} oracle {}",
                i,
                r.eigenvalues[i],
                oracle[i]
            );
        }
        // B-orthonormality of eigenvectors
        for i in 0..10 {
            for j in 0..10 {
                let g = b_inner(&b, &r.eigenvectors[i], &r.eigenvectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - c(want)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn invariant_under_permutation() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 40;
        let mut coo = CooMatrix::new(dim);
        for i in 0..dim {
            coo.push(i, i, c(2.0 + (i % 5) as f64));
            coo.push_edge(i, (i + 1) % dim, 0.5, Complex64::new(0.8, 0.6));
        }
        let a = coo.to_csr();
        let b = CsrMatrix::identity(dim);
        let r1 = smallest_eigenpairs(&a, &b, 5, &SolveOptions::default()).unwrap();
        let mut perm: Vec<usize> = (0..dim).collect();
        perm.shuffle(&mut rng);
        let ap = a.permute_sym(&perm);
        let r2 = smallest_eigenpairs(&ap, &b, 5, &SolveOptions::default()).unwrap();
        for i in 0..5 {
            assert!((r1.eigenvalues[i] - r2.eigenvalues[i]).abs() < 1e-9 * (1.0 + r1.eigenvalues[i].abs()));
        }
    }

    #[test]
    fn count_below_threshold_matches_oracle() {
        let n = 6usize;
        let dim = n * n;
        let mut coo = CooMatrix::new(dim);
        for i in 0..n {
            for j in 0..n {
                let p = i + n * j;
                coo.push_edge(p, (i + 1) % n + n * j, 1.0, c(1.0));
                coo.push_edge(p, i + n * ((j + 1) % n), 1.0, c(1.0));
            }
        }
        let a = coo.to_csr();
        let b = CsrMatrix::identity(dim);
        let oracle = dense_oracle(&a, &b, None).unwrap();
        // spectrum is {0, 1, ..., 8} with multiplicities; pick a threshold
        // strictly inside a gap so the count is unambiguous
        let thresh = 2.5;
        let count = oracle.iter().filter(|&&v| v < thresh).count();
        let r = smallest_eigenpairs(&a, &b, count + 3, &SolveOptions::default()).unwrap();
        let sparse_count = r.eigenvalues.iter().filter(|&&v| v < thresh).count();
        assert_eq!(sparse_count, count);
    }

    #[test]
    fn rejects_indefinite_mass() {
        let a = CsrMatrix::identity(3);
        let b = CsrMatrix::diagonal(&[1.0, -1.0, 1.0]);
        assert!(smallest_eigenpairs(&a, &b, 1, &SolveOptions::default()).is_err());
        assert!(dense_oracle(&a, &b, None).is_err());
    }
}
