//! Dense linear algebra needed by the quadrature and sampling code.

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric tridiagonal matrix and the first component of
/// each normalized eigenvector (implicit QL with Wilkinson shifts).
///
/// `diag` has length n, `offdiag` has length n-1. Eigenvalues are returned
/// in ascending order.
pub fn tridiagonal_eigen(
    diag: &[f64],
    offdiag: &[f64],
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n.max(1));
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > max_iter {
                return Err(Error::NoConvergence {
                    what: "tridiagonal QL",
                    iterations: max_iter,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok((idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect()))
}

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both (i, j) and (j, i).
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Symmetric-pivoted Cholesky factor `Σ = P L Lᵀ Pᵀ` of a positive
/// semidefinite matrix.
///
/// Pivots are chosen by largest relative residual variance (residual
/// diagonal over original diagonal), which makes the factorization
/// invariant to the mixed scales of the driver covariance. Once every
/// remaining relative residual falls below `tol` the factor is truncated:
/// those directions carry no variance beyond round-off.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    n: usize,
    rank: usize,
    /// `perm[k]` is the original index of factor row k.
    perm: Vec<usize>,
    /// Packed rows; row k holds `min(k + 1, rank)` entries.
    values: Vec<f64>,
    offsets: Vec<usize>,
}

/// Residual variance below this fraction of the original diagonal is treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-13;
/// Residual variance below `-NEGATIVE_TOL * diag` is reported as indefinite.
pub const NEGATIVE_TOL: f64 = 1e-9;

impl PivotedCholesky {
    /// Factors `a`. The first `forced_prefix` indices are pivoted in their
    /// natural order before any pivot search.
    pub fn new(a: &SymMatrix, forced_prefix: usize, tol: f64) -> Result<Self> {
        let n = a.dim();
        let orig_diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        for (i, &d) in orig_diag.iter().enumerate() {
            if !(d >= 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut resid = orig_diag.clone();
        // dense working factor in pivoted row order, row-major n x n
        let mut l = vec![0.0; n * n];
        let mut rank = n;

        let rel = |resid: &[f64], i: usize| {
            if orig_diag[i] > 0.0 {
                resid[i] / orig_diag[i]
            } else {
                0.0
            }
        };

        for k in 0..n {
            let p = if k < forced_prefix {
                k
            } else {
                (k..n)
                    .max_by(|&x, &y| rel(&resid, perm[x]).total_cmp(&rel(&resid, perm[y])))
                    .unwrap()
            };
            if p != k {
                perm.swap(k, p);
                for j in 0..k {
                    l.swap(k * n + j, p * n + j);
                }
            }
            let pk = perm[k];
            let r = rel(&resid, pk);
            if r <= tol {
                if k >= forced_prefix || r > -NEGATIVE_TOL {
                    rank = k;
                    break;
                }
            }
            if r < -NEGATIVE_TOL {
                return Err(Error::NotPositiveDefinite {
                    pivot: pk,
                    value: resid[pk],
                });
            }
            let lkk = resid[pk].sqrt();
            l[k * n + k] = lkk;
            for i in k + 1..n {
                let pi = perm[i];
                let mut s = a.get(pi, pk);
                let (ri, rk) = (&l[i * n..i * n + k], &l[k * n..k * n + k]);
                for j in 0..k {
                    s -= ri[j] * rk[j];
                }
                let v = s / lkk;
                l[i * n + k] = v;
                resid[pi] -= v * v;
            }
        }

        for k in rank..n {
            let pk = perm[k];
            if rel(&resid, pk) < -NEGATIVE_TOL {
                return Err(Error::NotPositiveDefinite {
                    pivot: pk,
                    value: resid[pk],
                });
            }
        }

        let mut values = Vec::new();
        let mut offsets = Vec::with_capacity(n + 1);
        for k in 0..n {
            offsets.push(values.len());
            let len = (k + 1).min(rank);
            values.extend_from_slice(&l[k * n..k * n + len]);
        }
        offsets.push(values.len());
        Ok(Self {
            n,
            rank,
            perm,
            values,
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `out = P L z`. Only the first `rank` entries of `z` are read.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        for k in 0..self.n {
            let row = &self.values[self.offsets[k]..self.offsets[k + 1]];
            let mut s = 0.0;
            for (a, b) in row.iter().zip(z) {
                s += a * b;
            }
            out[self.perm[k]] = s;
        }
    }

    /// Entry of the factor in original coordinates: row `i` of `P L`, column `j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let k = self.perm.iter().position(|&p| p == i).unwrap();
        let row = &self.values[self.offsets[k]..self.offsets[k + 1]];
        row.get(j).copied().unwrap_or(0.0)
    }

    /// `P L Lᵀ Pᵀ`, for diagnostics and tests.
    pub fn reconstruct(&self) -> SymMatrix {
        let mut out = SymMatrix::zeros(self.n);
        for a in 0..self.n {
            let ra = &self.values[self.offsets[a]..self.offsets[a + 1]];
            for b in 0..=a {
                let rb = &self.values[self.offsets[b]..self.offsets[b + 1]];
                let s: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                out.set(self.perm[a], self.perm[b], s);
            }
        }
        out
    }
}
