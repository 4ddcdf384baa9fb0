//! Small dense and banded linear algebra used by the solvers.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field operations needed by the block solver; implemented for `f64` and
/// `Complex64`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + std::fmt::Debug
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// LU factorisation with partial pivoting of a small dense `k×k` matrix.
#[derive(Clone, Debug)]
pub struct DenseLu<T: Scalar> {
    k: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
    pub min_pivot: f64,
    pub max_pivot: f64,
}

impl<T: Scalar> DenseLu<T> {
    pub fn factor(k: usize, a: &[T]) -> Result<Self> {
        let mut lu = Self::empty(k);
        lu.refactor(a)?;
        Ok(lu)
    }

    fn empty(k: usize) -> Self {
        DenseLu {
            k,
            lu: Vec::with_capacity(k * k),
            piv: Vec::with_capacity(k),
            min_pivot: f64::INFINITY,
            max_pivot: 0.0,
        }
    }

    /// Factors `a` reusing this factorisation's storage.
    pub fn refactor(&mut self, a: &[T]) -> Result<()> {
        let k = self.k;
        let lu = &mut self.lu;
        lu.clear();
        lu.extend_from_slice(a);
        self.piv.clear();
        self.min_pivot = f64::INFINITY;
        self.max_pivot = 0.0;
        for col in 0..k {
            let mut p = col;
            let mut best = lu[col * k + col].modulus();
            for r in col + 1..k {
                let v = lu[r * k + col].modulus();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Numeric(format!(
                    "singular {k}x{k} block (zero pivot in column {col})"
                )));
            }
            self.min_pivot = self.min_pivot.min(best);
            self.max_pivot = self.max_pivot.max(best);
            if p != col {
                for c in 0..k {
                    lu.swap(col * k + c, p * k + c);
                }
            }
            // row swapped into position `col` at this step
            self.piv.push(p);
            let d = lu[col * k + col];
            for r in col + 1..k {
                let f = lu[r * k + col] / d;
                lu[r * k + col] = f;
                for c in col + 1..k {
                    let v = lu[col * k + c];
                    lu[r * k + c] = lu[r * k + c] - f * v;
                }
            }
        }
        Ok(())
    }

    /// Solves in place for one right-hand side.
    pub fn solve_in_place(&self, b: &mut [T]) {
        self.solve_strided(b, 0, 1);
    }

    /// Solves for the vector `b[offset + r * stride]`, `r < k`.
    fn solve_strided(&self, b: &mut [T], offset: usize, stride: usize) {
        let k = self.k;
        let at = |r: usize| offset + r * stride;
        for (col, &p) in self.piv.iter().enumerate() {
            if p != col {
                b.swap(at(col), at(p));
            }
        }
        for r in 0..k {
            let mut s = b[at(r)];
            for c in 0..r {
                s = s - self.lu[r * k + c] * b[at(c)];
            }
            b[at(r)] = s;
        }
        for r in (0..k).rev() {
            let mut s = b[at(r)];
            for c in r + 1..k {
                s = s - self.lu[r * k + c] * b[at(c)];
            }
            b[at(r)] = s / self.lu[r * k + r];
        }
    }

    /// Solves `A X = B` for a `k×m` row-major `B`, in place.
    pub fn solve_matrix_in_place(&self, b: &mut [T], m: usize) {
        for j in 0..m {
            self.solve_strided(b, j, m);
        }
    }
}

/// Block tridiagonal matrix with `n` block rows of size `k×k`.
///
/// Block row `i` reads `L_i x_{i-1} + D_i x_i + U_i x_{i+1}`; blocks are
/// stored row-major and contiguously, `L_0` and `U_{n-1}` are ignored.
#[derive(Clone, Debug)]
pub struct BlockTridiag<T: Scalar> {
    pub k: usize,
    pub n: usize,
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> BlockTridiag<T> {
    pub fn zeros(k: usize, n: usize) -> Self {
        let z = vec![T::zero(); n * k * k];
        BlockTridiag {
            k,
            n,
            lower: z.clone(),
            diag: z.clone(),
            upper: z,
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, r: usize, c: usize) -> usize {
        (i * self.k + r) * self.k + c
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let (k, n) = (self.k, self.n);
        let mut y = vec![T::zero(); n * k];
        for i in 0..n {
            for r in 0..k {
                let mut s = T::zero();
                for c in 0..k {
                    s = s + self.diag[self.idx(i, r, c)] * x[i * k + c];
                    if i > 0 {
                        s = s + self.lower[self.idx(i, r, c)] * x[(i - 1) * k + c];
                    }
                    if i + 1 < n {
                        s = s + self.upper[self.idx(i, r, c)] * x[(i + 1) * k + c];
                    }
                }
                y[i * k + r] = s;
            }
        }
        y
    }

    /// Block Thomas algorithm.  Returns the solution and the ratio of the
    /// smallest to the largest pivot encountered, a cheap conditioning proxy.
    pub fn solve(&self, rhs: &[T]) -> Result<(Vec<T>, f64)> {
        let (k, n) = (self.k, self.n);
        if rhs.len() != n * k {
            return Err(Error::invalid("block system: right-hand side length mismatch"));
        }
        let kk = k * k;
        let mut g_mat = vec![T::zero(); n * kk];
        let mut g_vec = vec![T::zero(); n * k];
        let mut dprime = vec![T::zero(); kk];
        let mut tmp = vec![T::zero(); kk];
        let mut y = vec![T::zero(); k];
        let mut lu = DenseLu::empty(k);
        let mut min_p = f64::INFINITY;
        let mut max_p: f64 = 0.0;
        for i in 0..n {
            dprime.copy_from_slice(&self.diag[i * kk..(i + 1) * kk]);
            y.copy_from_slice(&rhs[i * k..(i + 1) * k]);
            if i > 0 {
                let l = &self.lower[i * kk..(i + 1) * kk];
                let gp = &g_mat[(i - 1) * kk..i * kk];
                // D' -= L G_{i-1}
                for r in 0..k {
                    for c in 0..k {
                        let mut s = T::zero();
                        for q in 0..k {
                            s = s + l[r * k + q] * gp[q * k + c];
                        }
                        tmp[r * k + c] = s;
                    }
                }
                for (d, t) in dprime.iter_mut().zip(&tmp) {
                    *d = *d - *t;
                }
                let gv = &g_vec[(i - 1) * k..i * k];
                for r in 0..k {
                    let mut s = T::zero();
                    for q in 0..k {
                        s = s + l[r * k + q] * gv[q];
                    }
                    y[r] = y[r] - s;
                }
            }
            lu.refactor(&dprime)
                .map_err(|e| Error::Numeric(format!("block row {i}: {e}")))?;
            min_p = min_p.min(lu.min_pivot);
            max_p = max_p.max(lu.max_pivot);
            lu.solve_in_place(&mut y);
            g_vec[i * k..(i + 1) * k].copy_from_slice(&y);
            if i + 1 < n {
                let gm = &mut g_mat[i * kk..(i + 1) * kk];
                gm.copy_from_slice(&self.upper[i * kk..(i + 1) * kk]);
                lu.solve_matrix_in_place(gm, k);
            }
        }
        let mut x = g_vec;
        for i in (0..n.saturating_sub(1)).rev() {
            let gm = &g_mat[i * kk..(i + 1) * kk];
            for r in 0..k {
                let mut s = T::zero();
                for q in 0..k {
                    s = s + gm[r * k + q] * x[(i + 1) * k + q];
                }
                x[i * k + r] = x[i * k + r] - s;
            }
        }
        let ratio = if max_p > 0.0 { min_p / max_p } else { 0.0 };
        Ok((x, ratio))
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by the implicit QL
/// algorithm with Wilkinson shifts.
///
/// `diag` has length `n`, `off` length `n-1`.  Returns eigenvalues in
/// ascending order and the matching orthonormal (Euclidean) eigenvectors as
/// columns of a row-major `n×n` matrix.
pub fn symmetric_tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::invalid("tridiagonal eigen: inconsistent lengths"));
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
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
            if iter > 60 {
                return Err(Error::Numeric(format!(
                    "tridiagonal QL did not converge for eigenvalue {l}"
                )));
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
                for k in 0..n {
                    let zk1 = z[k * n + i + 1];
                    let zk = z[k * n + i];
                    z[k * n + i + 1] = s * zk + c * zk1;
                    z[k * n + i] = c * zk - s * zk1;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + new] = z[r * n + old];
        }
    }
    Ok((vals, vecs))
}

/// Eigenvalues of a small dense symmetric matrix (cyclic Jacobi).
pub fn symmetric_eigenvalues(k: usize, a: &[f64]) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..k {
            for q in p + 1..k {
                off += m[p * k + q] * m[p * k + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = m[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * k + q] - m[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = m[r * k + p];
                    let arq = m[r * k + q];
                    m[r * k + p] = c * arp - s * arq;
                    m[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = m[p * k + r];
                    let aqr = m[q * k + r];
                    m[p * k + r] = c * apr - s * aqr;
                    m[q * k + r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..k).map(|i| m[i * k + i]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}
