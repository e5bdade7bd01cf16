//! Sparse LDLᵀ factorization of symmetric quasidefinite matrices with a
//! fill-reducing ordering, an inertia count, and iterative refinement.
//!
//! The numeric phase is the up-looking elimination-tree algorithm used by
//! QDLDL: no pivoting, so the caller regularizes until the matrix is
//! quasidefinite and checks the reported inertia.

use std::collections::HashMap;

use crate::ordering::{eliminate, OrderingHeuristic};
use crate::scalar::Real;

const NONE: usize = usize::MAX;

/// Ordering and fill pattern for a fixed sparsity structure.
#[derive(Clone, Debug)]
pub struct SymbolicLdl {
    n: usize,
    perm: Vec<usize>,
    /// Upper-triangular CSC pattern of the permuted matrix.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Position in the CSC value array of each caller entry.
    slot: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LdlFactor<R> {
    li: Vec<usize>,
    lx: Vec<R>,
    d: Vec<R>,
    dinv: Vec<R>,
    /// Number of positive pivots.
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroPivot(pub usize);

impl SymbolicLdl {
    /// `entries` lists lower-triangle positions `(row, col)`, `row >= col`.
    /// Repeated positions are summed. Missing diagonal entries are added.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(r, c) in entries {
            debug_assert!(r >= c && r < n);
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        let order = eliminate(&adj, OrderingHeuristic::MinDegree).order;
        let mut pinv = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            pinv[v] = k;
        }

        // Permuted upper-triangle pattern, column by column.
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for &(r, c) in entries {
            let (a, b) = (pinv[r], pinv[c]);
            let (row, col) = (a.min(b), a.max(b));
            cols[col].push(row);
        }
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
        }
        let mut ap = vec![0; n + 1];
        let mut ai = Vec::new();
        let mut pos: HashMap<(usize, usize), usize> = HashMap::new();
        for (j, col) in cols.iter().enumerate() {
            for &i in col {
                pos.insert((i, j), ai.len());
                ai.push(i);
            }
            ap[j + 1] = ai.len();
        }
        let slot = entries
            .iter()
            .map(|&(r, c)| {
                let (a, b) = (pinv[r], pinv[c]);
                pos[&(a.min(b), a.max(b))]
            })
            .collect();

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &i0 in &ai[ap[j]..ap[j + 1]] {
                let mut i = i0;
                while i != j && work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        SymbolicLdl {
            n,
            perm: order,
            ap,
            ai,
            slot,
            etree,
            lp,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization; `values[k]` belongs to `entries[k]`.
    pub fn factor<R: Real>(&self, values: &[R]) -> Result<LdlFactor<R>, ZeroPivot> {
        let n = self.n;
        let mut ax = vec![R::zero(); self.ai.len()];
        for (k, &v) in values.iter().enumerate() {
            ax[self.slot[k]] = ax[self.slot[k]] + v;
        }
        let nnz = self.lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![R::zero(); nnz];
        let mut d = vec![R::zero(); n];
        let mut dinv = vec![R::zero(); n];
        let mut next = self.lp[..n].to_vec();
        let mut y = vec![R::zero(); n];
        let mut marked = vec![false; n];
        let mut y_idx = Vec::with_capacity(n);
        let mut stack = Vec::with_capacity(n);
        let (mut positive, mut negative) = (0, 0);

        for k in 0..n {
            y_idx.clear();
            for p in self.ap[k]..self.ap[k + 1] {
                let i = self.ai[p];
                if i == k {
                    d[k] = ax[p];
                    continue;
                }
                y[i] = ax[p];
                if marked[i] {
                    continue;
                }
                // Walk up the elimination tree to collect the reach of row k.
                stack.clear();
                let mut t = i;
                while t != NONE && t < k && !marked[t] {
                    marked[t] = true;
                    stack.push(t);
                    t = self.etree[t];
                }
                while let Some(t) = stack.pop() {
                    y_idx.push(t);
                }
            }
            for &c in y_idx.iter().rev() {
                let yc = y[c];
                for j in self.lp[c]..next[c] {
                    y[li[j]] = y[li[j]] - lx[j] * yc;
                }
                let l = yc * dinv[c];
                li[next[c]] = k;
                lx[next[c]] = l;
                d[k] = d[k] - yc * l;
                next[c] += 1;
                y[c] = R::zero();
                marked[c] = false;
            }
            if d[k] == R::zero() || !d[k].is_finite() {
                return Err(ZeroPivot(self.perm[k]));
            }
            if d[k] > R::zero() {
                positive += 1;
            } else {
                negative += 1;
            }
            dinv[k] = R::one() / d[k];
        }
        Ok(LdlFactor {
            li,
            lx,
            d,
            dinv,
            positive,
            negative,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve<R: Real>(&self, f: &LdlFactor<R>, b: &mut [R]) {
        let n = self.n;
        let mut x: Vec<R> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[f.li[j]] = x[f.li[j]] - f.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] = x[i] * f.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi = xi - f.lx[j] * x[f.li[j]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }

    pub fn pivots<'a, R: Real>(&self, f: &'a LdlFactor<R>) -> &'a [R] {
        &f.d
    }
}

/// `y = A x` for a symmetric matrix given by its lower triangle.
pub fn sym_matvec<R: Real>(n: usize, entries: &[(usize, usize)], values: &[R], x: &[R]) -> Vec<R> {
    let mut y = vec![R::zero(); n];
    for (&(r, c), &v) in entries.iter().zip(values) {
        y[r] = y[r] + v * x[c];
        if r != c {
            y[c] = y[c] + v * x[r];
        }
    }
    y
}

/// Solve with up to `max_steps` rounds of iterative refinement against
/// the unregularized matrix. Returns the final residual infinity norm.
pub fn solve_refined<R: Real>(
    sym: &SymbolicLdl,
    f: &LdlFactor<R>,
    entries: &[(usize, usize)],
    values: &[R],
    b: &[R],
    x: &mut Vec<R>,
    max_steps: usize,
) -> R {
    x.clear();
    x.extend_from_slice(b);
    sym.solve(f, x);
    let norm = |v: &[R]| v.iter().fold(R::zero(), |m, a| m.max(a.abs()));
    let bnorm = norm(b).max(R::one());
    let mut res = R::infinity();
    for _ in 0..=max_steps {
        let ax = sym_matvec(sym.n(), entries, values, x);
        let mut r: Vec<R> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        res = norm(&r);
        if res <= R::cast(1e-12) * bnorm {
            break;
        }
        sym.solve(f, &mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi = *xi + *ri;
        }
    }
    res
}
