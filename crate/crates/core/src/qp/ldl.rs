//! Sparse LDLᵀ factorization for symmetric quasi-definite matrices.
//!
//! Fill-reducing ordering is a plain minimum-degree elimination on the
//! adjacency graph; numeric factorization is the up-looking scheme driven
//! by the elimination tree. The symbolic part is computed once and reused
//! when only values change (e.g. after a penalty update).

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Minimum-degree elimination order of the graph with `n` vertices and the
/// given undirected edges. Ties are broken by the smaller vertex id, so the
/// order is deterministic.
pub fn minimum_degree_order(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if done[v] || deg != adj[v].len() {
            continue;
        }
        done[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        for (k, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[k + 1..] {
                if adj[a].insert(b) {
                    adj[b].insert(a);
                }
            }
        }
        for &a in &nbrs {
            heap.push(Reverse((adj[a].len(), a)));
        }
    }
    order
}

/// LDLᵀ factor of `P K Pᵀ` for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // Permuted upper triangle in CSC form.
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// Position in `ax` of each input triplet.
    slot_of_triplet: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Symbolic analysis and first numeric factorization. `triplets` may hold
    /// either triangle (or both halves of an off-diagonal pair, which are then
    /// summed); later calls to [`LdlFactor::refactor`] must pass triplets in the
    /// same order and pattern.
    pub fn new(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let perm = minimum_degree_order(n, triplets.iter().map(|&(i, j, _)| (i, j)));
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        // Map every triplet to (col, row) in the permuted upper triangle.
        let mut keyed: Vec<(usize, usize, usize)> = triplets
            .iter()
            .enumerate()
            .map(|(t, &(i, j, _))| {
                let (a, b) = (iperm[i], iperm[j]);
                (a.max(b), a.min(b), t)
            })
            .collect();
        // Diagonal must be structurally present.
        keyed.sort_unstable();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(keyed.len() + n);
        let mut slot_of_triplet = vec![0usize; triplets.len()];
        let mut k = 0;
        for col in 0..n {
            let mut has_diag = false;
            while k < keyed.len() && keyed[k].0 == col {
                let (_, row, t) = keyed[k];
                if ai.len() > ap[col] && *ai.last().unwrap() == row {
                    slot_of_triplet[t] = ai.len() - 1;
                } else {
                    ai.push(row);
                    slot_of_triplet[t] = ai.len() - 1;
                }
                has_diag |= row == col;
                k += 1;
            }
            if !has_diag {
                ai.push(col);
            }
            ap[col + 1] = ai.len();
        }
        let ax = vec![0.0; ai.len()];

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut factor = Self {
            n,
            perm,
            iperm,
            ap,
            ai,
            ax,
            slot_of_triplet,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        factor.refactor(triplets)?;
        Ok(factor)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Number of negative pivots; equals the number of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Numeric factorization with new values on the analysed pattern.
    pub fn refactor(&mut self, triplets: &[(usize, usize, f64)]) -> Result<()> {
        if triplets.len() != self.slot_of_triplet.len() {
            return Err(Error::Factorization("pattern changed between factorizations".into()));
        }
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (t, &(_, _, v)) in triplets.iter().enumerate() {
            self.ax[self.slot_of_triplet[t]] += v;
        }
        self.numeric()
    }

    fn numeric(&mut self) -> Result<()> {
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut n_elim = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[n_elim] = next;
                        n_elim += 1;
                        next = self.etree[next];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        y_idx[nnz_y] = elim[n_elim];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(Error::Factorization(format!("zero or non-finite pivot at {k}")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `K x = b` in place (original ordering).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }

    pub fn inverse_permutation(&self) -> &[usize] {
        &self.iperm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(n: usize, trip: &[(usize, usize, f64)], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, j, v) in trip {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [P Aᵀ; A -R] with P = [[4,1],[1,3]], A = [[1,1]], R = 0.1
        let trip = vec![
            (0, 0, 4.0),
            (0, 1, 1.0),
            (1, 1, 3.0),
            (0, 2, 1.0),
            (1, 2, 1.0),
            (2, 2, -0.1),
        ];
        let f = LdlFactor::new(3, &trip).unwrap();
        assert_eq!(f.negative_pivots(), 1);
        let rhs = vec![1.0, -2.0, 0.5];
        let mut x = rhs.clone();
        f.solve(&mut x);
        let back = dense_mul(3, &trip, &x);
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn arrow_matrix_and_refactor() {
        // Arrowhead: dense last row/column, diagonal elsewhere.
        let n = 30;
        let mut trip: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i, 2.0 + i as f64)).collect();
        trip.extend((0..n - 1).map(|i| (i, n - 1, 1.0)));
        trip.push((n - 1, n - 1, -5.0));
        let mut f = LdlFactor::new(n, &trip).unwrap();
        // Minimum degree puts the hub last; no fill.
        assert_eq!(f.nnz_l(), n - 1);
        for scale in [1.0, 3.0] {
            let scaled: Vec<_> = trip.iter().map(|&(i, j, v)| (i, j, v * scale)).collect();
            f.refactor(&scaled).unwrap();
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut x = rhs.clone();
            f.solve(&mut x);
            let back = dense_mul(n, &scaled, &x);
            for (a, b) in back.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let trip = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)];
        assert!(LdlFactor::new(2, &trip).is_err());
    }
}
