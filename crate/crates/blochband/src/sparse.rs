//! Minimal complex sparse matrices (COO assembly, CSR storage) plus the
//! reverse Cuthill-McKee ordering used to keep factorizations banded.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Triplet accumulator for assembly. Duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct CooMatrix {
    dim: usize,
    entries: Vec<(u32, u32, Complex64)>,
}

impl CooMatrix {
    pub fn new(dim: usize) -> Self {
        CooMatrix { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row as u32, col as u32, value));
    }

    /// Adds the four entries of a symmetric edge term
    /// `w |u_p - phase u_q|^2` to the quadratic form matrix.
    pub fn push_edge(&mut self, p: usize, q: usize, weight: f64, phase: Complex64) {
        let w = Complex64::new(weight, 0.0);
        self.push(p, p, w);
        self.push(q, q, w);
        self.push(p, q, -w * phase);
        self.push(q, p, -w * phase.conj());
    }

    pub fn to_csr(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut cols: Vec<u32> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(self.entries.len());
        let mut rows: Vec<u32> = Vec::with_capacity(self.entries.len());
        for &(i, j, v) in &self.entries {
            if rows.last() == Some(&i) && cols.last() == Some(&j) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                cols.push(j);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; self.dim + 1];
        for &i in &rows {
            row_ptr[i as usize + 1] += 1;
        }
        for r in 0..self.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { dim: self.dim, row_ptr, cols, vals }
    }
}

/// Compressed sparse row matrix over `Complex64`.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[Complex64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        CsrMatrix {
            dim: d.len(),
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len() as u32).collect(),
            vals: d.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        for i in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn diag(&self) -> Vec<Complex64> {
        let mut d = vec![Complex64::new(0.0, 0.0); self.dim];
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] as usize == i {
                    d[i] += self.vals[k];
                }
            }
        }
        d
    }

    /// True when every stored entry lies on the main diagonal.
    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| self.cols[k] as usize == i)
        })
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k].norm()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `self + alpha * other`; patterns are merged.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: Complex64) -> CsrMatrix {
        assert_eq!(self.dim, other.dim);
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.dim {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(u32::MAX);
                let jb = cb.get(q).copied().unwrap_or(u32::MAX);
                if ja < jb {
                    cols.push(ja);
                    vals.push(va[p]);
                    p += 1;
                } else if jb < ja {
                    cols.push(jb);
                    vals.push(alpha * vb[q]);
                    q += 1;
                } else {
                    cols.push(ja);
                    vals.push(va[p] + alpha * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr[i + 1] = cols.len();
        }
        CsrMatrix { dim: self.dim, row_ptr, cols, vals }
    }

    /// Symmetric permutation: `B[i, j] = A[perm[i], perm[j]]`,
    /// i.e. `perm[new] = old`.
    pub fn permute_sym(&self, perm: &[usize]) -> CsrMatrix {
        assert_eq!(perm.len(), self.dim);
        let mut inv = vec![0usize; self.dim];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut coo = CooMatrix::new(self.dim);
        for i in 0..self.dim {
            let (c, v) = self.row(i);
            for (j, &val) in c.iter().zip(v) {
                coo.push(inv[i], inv[*j as usize], val);
            }
        }
        coo.to_csr()
    }

    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.dim {
            let (c, _) = self.row(i);
            for &j in c {
                bw = bw.max(i.abs_diff(j as usize));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let (c, v) = self.row(i);
            for (j, &val) in c.iter().zip(v) {
                m[(i, *j as usize)] += val;
            }
        }
        m
    }

    /// Largest deviation from Hermitian symmetry, for diagnostics.
    pub fn hermitian_violation(&self) -> f64 {
        let d = self.to_dense();
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((d[(i, j)] - d[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

/// Reverse Cuthill-McKee ordering of the pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree = |i: usize| -> usize {
        let (c, _) = a.row(i);
        c.iter().filter(|&&j| j as usize != i).count()
    };
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by_key(|&i| degree(i));
    for &s in &starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let (c, _) = a.row(u);
            let mut nbrs: Vec<usize> = c
                .iter()
                .map(|&j| j as usize)
                .filter(|&j| j != u && !visited[j])
                .collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            nbrs.sort_by_key(|&j| degree(j));
            for j in nbrs {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn coo_merges_duplicates() {
        let mut coo = CooMatrix::new(3);
        coo.push(0, 0, c(1.0));
        coo.push(0, 0, c(2.0));
        coo.push(1, 2, c(-1.0));
        let m = coo.to_csr();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.diag()[0], c(3.0));
    }

    #[test]
    fn matvec_matches_dense() {
        let mut coo = CooMatrix::new(4);
        coo.push_edge(0, 1, 2.0, Complex64::new(0.0, 1.0));
        coo.push_edge(2, 3, 1.0, c(1.0));
        coo.push(2, 2, c(5.0));
        let m = coo.to_csr();
        let x: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut y = vec![c(0.0); 4];
        m.matvec(&x, &mut y);
        let d = m.to_dense();
        let xd = nalgebra::DVector::from_column_slice(&x);
        let yd = &d * &xd;
        for i in 0..4 {
            assert!((y[i] - yd[i]).norm() < 1e-14);
        }
        assert!(m.hermitian_violation() < 1e-15);
    }

    #[test]
    fn rcm_reduces_ring_bandwidth() {
        // ring of 16 nodes: natural ordering has the wrap edge at bandwidth 15
        let mut coo = CooMatrix::new(16);
        for i in 0..16 {
            coo.push_edge(i, (i + 1) % 16, 1.0, c(1.0));
        }
        let m = coo.to_csr();
        assert_eq!(m.bandwidth(), 15);
        let perm = rcm_ordering(&m);
        let p = m.permute_sym(&perm);
        assert!(p.bandwidth() <= 2, "bandwidth {}", p.bandwidth());
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = CsrMatrix::diagonal(&[1.0, 2.0]);
        let mut coo = CooMatrix::new(2);
        coo.push(0, 1, c(3.0));
        coo.push(1, 0, c(3.0));
        let b = coo.to_csr();
        let s = a.add_scaled(&b, c(2.0));
        let d = s.to_dense();
        assert_eq!(d[(0, 1)], c(6.0));
        assert_eq!(d[(0, 0)], c(1.0));
    }
}
