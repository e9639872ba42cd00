//! Minimal sparse linear algebra: symmetric CSR matrices, reverse
//! Cuthill-McKee ordering and an LDL^T factorization for SPD systems.
//!
//! This is deliberately small — the only consumers are the cotangent
//! stiffness matrix and the shift-invert eigensolver, which need a
//! symmetric matvec and a sparse factorization with forward/backward solves.

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Only square symmetric matrices are stored
/// here; both triangles are kept so that row iteration doubles as
/// neighborhood iteration.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets, summing duplicates.
    /// Entries are sorted by (row, col).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut entries: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            entries[cursor[r]] = (c, v);
            cursor[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n {
            let row = &mut entries[counts[r]..counts[r + 1]];
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut last_col = usize::MAX;
            for &(c, v) in row.iter() {
                if c == last_col {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last_col = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices of row `i` (includes the diagonal if stored).
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn mul_vec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// Max absolute row sum (infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_values(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Max |A - A^T| entry; zero for matrices assembled symmetrically.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (k, &j) in self.row_indices(i).iter().enumerate() {
                let v = self.row_values(i)[k];
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Symmetric permutation B = P A P^T where `perm[new] = old`.
    pub fn permute_sym(&self, perm: &[usize]) -> CsrMatrix {
        let n = self.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..n {
            for (k, &j) in self.row_indices(i).iter().enumerate() {
                triplets.push((inv[i], inv[j], self.row_values(i)[k]));
            }
        }
        CsrMatrix::from_triplets(n, &triplets)
    }

    /// Dense copy, for small-matrix oracles and the dense eigensolver path.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (k, &j) in self.row_indices(i).iter().enumerate() {
                m[(i, j)] = self.row_values(i)[k];
            }
        }
        m
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph; returns `perm` with
/// `perm[new] = old`. Reduces bandwidth so the LDL factor stays sparse on
/// mesh Laplacians. Handles disconnected graphs component by component.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row_indices(i).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut buf: Vec<usize> = Vec::new();

    while order.len() < n {
        // lowest-degree unvisited vertex as component seed
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let start = pseudo_peripheral(a, seed, &mut visited.clone());
        let head = order.len();
        visited[start] = true;
        order.push(start);
        let mut next = head;
        while next < order.len() {
            let v = order[next];
            next += 1;
            buf.clear();
            buf.extend(
                a.row_indices(v)
                    .iter()
                    .copied()
                    .filter(|&u| u != v && !visited[u]),
            );
            buf.sort_unstable_by_key(|&u| (degree[u], u));
            for &u in &buf {
                if !visited[u] {
                    visited[u] = true;
                    order.push(u);
                }
            }
        }
        order[head..].reverse();
    }
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, visited: &mut [bool]) -> usize {
    // two BFS sweeps toward an eccentric vertex
    let mut start = seed;
    for _ in 0..2 {
        let mut seen = visited.to_vec();
        let mut frontier = vec![start];
        seen[start] = true;
        let mut last = start;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &v in &frontier {
                for &u in a.row_indices(v) {
                    if u != v && !seen[u] {
                        seen[u] = true;
                        next.push(u);
                    }
                }
            }
            if let Some(&v) = next.iter().min_by_key(|&&u| a.row_indices(u).len()) {
                last = v;
            }
            frontier = next;
        }
        start = last;
    }
    start
}

/// LDL^T factorization of a sparse SPD matrix with a fill-reducing
/// permutation. Up-looking algorithm driven by the elimination tree.
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factor `a` (symmetric, both triangles stored). Fails when a pivot
    /// collapses, i.e. the matrix is not positive definite.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::with_permutation(a, perm)
    }

    pub fn with_permutation(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let pa = a.permute_sym(&perm);

        // symbolic: elimination tree + column counts of L
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &j in pa.row_indices(k) {
                let mut i = j;
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let nnz_l = lp[n];

        // numeric
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0f64; nnz_l];
        let mut d = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut walk: Vec<usize> = Vec::with_capacity(64);
        let mut fill = vec![0usize; n]; // entries written per column so far
        let mut flag = vec![usize::MAX; n];

        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (idx, &j) in pa.row_indices(k).iter().enumerate() {
                if j > k {
                    continue;
                }
                y[j] += pa.row_values(k)[idx];
                walk.clear();
                let mut i = j;
                while flag[i] != k {
                    walk.push(i);
                    flag[i] = k;
                    i = parent[i];
                }
                // store ancestors at higher positions so the solve below
                // visits descendants before ancestors
                for &w in walk.iter().rev() {
                    top -= 1;
                    pattern[top] = w;
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for t in top..n {
                let i = pattern[t];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + fill[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let lki = yi / d[i];
                dk -= lki * yi;
                li[p2] = k;
                lx[p2] = lki;
                fill[i] += 1;
            }
            if !(dk > 0.0) || !dk.is_finite() {
                return Err(Error::SolverFailure(format!(
                    "LDL pivot {dk:.3e} at column {k}; matrix not positive definite"
                )));
            }
            d[k] = dk;
        }

        Ok(LdlFactor {
            n,
            perm,
            inv_perm,
            lp,
            li,
            lx,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(x.len(), self.n);
        // x <- P b
        for new in 0..self.n {
            x[new] = b[self.perm[new]];
        }
        // forward: L z = x (unit diagonal, columns of L)
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.lp[j]..self.lp[j + 1] {
                    x[self.li[p]] -= self.lx[p] * xj;
                }
            }
        }
        // diagonal
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        // backward: L^T w = x
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * x[self.li[p]];
            }
            x[j] = acc;
        }
        // un-permute in place via scratch
        let scratch: Vec<f64> = (0..self.n).map(|old| x[self.inv_perm[old]]).collect();
        x.copy_from_slice(&scratch);
    }

    pub fn solve_alloc(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve(b, &mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize) -> CsrMatrix {
        // 1D chain Laplacian + identity: SPD tridiagonal
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 1.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_merge_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0), (0, 1, 4.0), (1, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = laplacian_like(12);
        let dense = a.to_dense();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let y = a.mul_vec_alloc(&x);
        let yd = dense * nalgebra::DVector::from_column_slice(&x);
        for i in 0..12 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn ldl_solves_spd_system() {
        let a = laplacian_like(50);
        let f = LdlFactor::new(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        let x = f.solve_alloc(&b);
        let r = a.mul_vec_alloc(&x);
        for i in 0..50 {
            assert!((r[i] - b[i]).abs() < 1e-10, "residual at {i}");
        }
    }

    #[test]
    fn ldl_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(LdlFactor::new(&a).is_err());
    }

    #[test]
    fn rcm_is_permutation() {
        let a = laplacian_like(33);
        let p = reverse_cuthill_mckee(&a);
        let mut seen = vec![false; 33];
        for &i in &p {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }
}
