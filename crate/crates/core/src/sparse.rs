//! Sparse symmetric matrices and an envelope (skyline) Cholesky factorization
//! with reverse Cuthill–McKee ordering.
//!
//! The finite-element systems in this crate are small to medium sized and
//! come from meshes with good locality, so a profile solver after bandwidth
//! reduction is both adequate and easy to audit.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Square sparse matrix in compressed sparse row form with sorted columns.
///
/// Symmetric operators are stored with both triangles.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the sparsity pattern from a list of `(row, col)` pairs; values are zero.
    pub fn from_pattern(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        CsrMatrix {
            n,
            row_ptr,
            cols,
            values: vec![0.0; nnz],
        }
    }

    /// Assembles from triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut m = Self::from_pattern(n, triplets.iter().map(|&(i, j, _)| (i, j)));
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn clear_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    /// Adds `v` to entry `(i, j)`. Panics if the entry is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i},{j}) outside sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Restriction to the rows and columns flagged in `keep`, renumbered in order.
    pub fn submatrix(&self, keep: &[bool]) -> (CsrMatrix, Vec<usize>) {
        let mut new_index = vec![usize::MAX; self.n];
        let mut old_index = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                new_index[i] = old_index.len();
                old_index.push(i);
            }
        }
        let m = old_index.len();
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in &old_index {
            for (j, v) in self.row(i) {
                if new_index[j] != usize::MAX {
                    cols.push(new_index[j]);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        (
            CsrMatrix {
                n: m,
                row_ptr,
                cols,
                values,
            },
            old_index,
        )
    }
}

/// Reverse Cuthill–McKee ordering of the adjacency graph of `a`.
///
/// Returns `perm` with `perm[new] = old`. Each connected component is started
/// from a pseudo-peripheral vertex of minimum degree.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // returns (eccentricity, farthest vertex with minimum degree)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        dist[start] = 0;
        q.push_back(start);
        let mut last = start;
        while let Some(v) = q.pop_front() {
            if dist[v] > dist[last] || (dist[v] == dist[last] && degree[v] < degree[last]) {
                last = v;
            }
            for (w, _) in a.row(v) {
                if !visited[w] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (dist[last], last)
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited vertex");
        // pseudo-peripheral node search
        let mut start = seed;
        let (mut ecc, mut far) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far, &visited);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .map(|(w, _)| w)
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first_col: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `a + shift·I` using the given ordering (`perm[new] = old`).
    pub fn factor_with(a: &CsrMatrix, perm: &[usize], shift: f64) -> Result<Self> {
        let n = a.dim();
        assert_eq!(perm.len(), n, "permutation length mismatch");
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first_col: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let jn = inv_perm[j];
                if jn < first_col[new] {
                    first_col[new] = jn;
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first_col[i] + 1));
        }
        let mut data = vec![0.0; row_start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = inv_perm[j];
                if jn <= new {
                    data[row_start[new] + jn - first_col[new]] += v;
                }
            }
            data[row_start[new] + new - first_col[new]] += shift;
        }

        for i in 0..n {
            let fi = first_col[i];
            let ri = row_start[i];
            for j in fi..i {
                let fj = first_col[j];
                let rj = row_start[j];
                let k0 = fi.max(fj);
                let mut s = data[ri + j - fi];
                let li = &data[ri + k0 - fi..ri + j - fi];
                let lj = &data[rj + k0 - fj..rj + j - fj];
                s -= dot(li, lj);
                let djj = data[rj + j - fj];
                data[ri + j - fi] = s / djj;
            }
            let row = &data[ri..ri + i - fi];
            let d = data[ri + i - fi] - dot(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: perm[i],
                    value: d,
                });
            }
            data[ri + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm: perm.to_vec(),
            inv_perm,
            first_col,
            row_start,
            data,
        })
    }

    /// Factors with a reverse Cuthill–McKee ordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with(a, &perm, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.perm
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        // forward: L y = b
        for i in 0..n {
            let fi = self.first_col[i];
            let ri = self.row_start[i];
            let s = dot(&self.data[ri..ri + i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / self.data[ri + i - fi];
        }
        // backward: Lᵀ x = y, column oriented over rows of L
        for i in (0..n).rev() {
            let fi = self.first_col[i];
            let ri = self.row_start[i];
            y[i] /= self.data[ri + i - fi];
            let yi = y[i];
            for (k, l) in (fi..i).zip(&self.data[ri..ri + i - fi]) {
                y[k] -= l * yi;
            }
        }
        (0..n).map(|old| y[self.inv_perm[old]]).collect()
    }

    /// Solve followed by `steps` rounds of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        x
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the inner loop vectorizable
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
