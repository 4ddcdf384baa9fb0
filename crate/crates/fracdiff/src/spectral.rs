//! Discrete elliptic operators on an interval and their spectral calculus.
//!
//! `A ψ = -(a ψ')'` with homogeneous Dirichlet conditions is discretised by the
//! conservative three-point stencil on a uniform grid.  Grid functions live on
//! the interior nodes and are paired by the `h`-weighted inner product
//! `(u, v) = h Σ u_j v_j`, so that eigenvectors approximate `L²`-normalised
//! eigenfunctions.

use crate::error::{Error, Result};
use crate::linalg::symmetric_tridiagonal_eigen;
use crate::mlf::{ml, MLParams};

/// Uniform grid on `[a_end, b_end]` with `n_interior` unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D {
    pub a_end: f64,
    pub b_end: f64,
    pub n_interior: usize,
    pub h: f64,
}

impl Grid1D {
    pub fn new(a_end: f64, b_end: f64, n_interior: usize) -> Result<Self> {
        if !(b_end > a_end) || !a_end.is_finite() || !b_end.is_finite() {
            return Err(Error::invalid(format!(
                "grid endpoints must satisfy a < b, got [{a_end}, {b_end}]"
            )));
        }
        if n_interior < 3 {
            return Err(Error::invalid("grid needs at least 3 interior nodes"));
        }
        Ok(Grid1D {
            a_end,
            b_end,
            n_interior,
            h: (b_end - a_end) / (n_interior + 1) as f64,
        })
    }

    /// Interior node coordinates `x_1 … x_n`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n_interior)
            .map(|j| self.a_end + j as f64 * self.h)
            .collect()
    }

    /// Coordinate of interior node `i` (0-based).
    pub fn node(&self, i: usize) -> f64 {
        self.a_end + (i + 1) as f64 * self.h
    }

    /// Cell midpoints `x_{1/2} … x_{n+1/2}` (there are `n + 1`).
    pub fn midpoints(&self) -> Vec<f64> {
        (0..=self.n_interior)
            .map(|j| self.a_end + (j as f64 + 0.5) * self.h)
            .collect()
    }

    /// Index of the interior node closest to `x`.
    pub fn nearest_node(&self, x: f64) -> Option<usize> {
        let j = ((x - self.a_end) / self.h).round() as i64;
        if j >= 1 && j as usize <= self.n_interior {
            Some(j as usize - 1)
        } else {
            None
        }
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }
}

/// `-(a u')'` with Dirichlet conditions; `a_coeff` holds `a` at the cell
/// midpoints.
#[derive(Clone, Debug)]
pub struct EllipticOperator1D {
    pub grid: Grid1D,
    pub a_coeff: Vec<f64>,
}

impl EllipticOperator1D {
    pub fn new(grid: Grid1D, a_coeff: Vec<f64>) -> Result<Self> {
        if a_coeff.len() != grid.n_interior + 1 {
            return Err(Error::invalid(format!(
                "expected {} midpoint coefficients, got {}",
                grid.n_interior + 1,
                a_coeff.len()
            )));
        }
        if let Some((i, v)) = a_coeff
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "ellipticity violated: a = {v} at midpoint {i}"
            )));
        }
        Ok(EllipticOperator1D { grid, a_coeff })
    }

    pub fn from_fn(grid: Grid1D, a: impl Fn(f64) -> f64) -> Result<Self> {
        let coeff = grid.midpoints().into_iter().map(a).collect();
        Self::new(grid, coeff)
    }

    pub fn constant(grid: Grid1D, a: f64) -> Result<Self> {
        Self::from_fn(grid, |_| a)
    }

    /// Ellipticity constant `κ = min a`.
    pub fn kappa(&self) -> f64 {
        self.a_coeff.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Symmetric tridiagonal matrix; `off[j]` couples rows `j` and `j+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j] * u[j];
                if j > 0 {
                    s += self.off[j - 1] * u[j - 1];
                }
                if j + 1 < n {
                    s += self.off[j] * u[j + 1];
                }
                s
            })
            .collect()
    }
}

/// Three-point stencil: row `j` is
/// `(-a_{j-1/2} u_{j-1} + (a_{j-1/2}+a_{j+1/2}) u_j - a_{j+1/2} u_{j+1}) / h²`.
pub fn assemble(op: &EllipticOperator1D) -> Result<SymTridiag> {
    let n = op.grid.n_interior;
    if op.a_coeff.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("ellipticity violated: non-positive coefficient"));
    }
    let ih2 = 1.0 / (op.grid.h * op.grid.h);
    let a = &op.a_coeff;
    let diag = (0..n).map(|j| (a[j] + a[j + 1]) * ih2).collect();
    let off = (0..n - 1).map(|j| -a[j + 1] * ih2).collect();
    Ok(SymTridiag { diag, off })
}

/// Leading eigenpairs of a discrete operator.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub grid: Grid1D,
    pub lambdas: Vec<f64>,
    /// `phis[n]` is the `n`-th eigenvector, unit length in the weighted norm.
    pub phis: Vec<Vec<f64>>,
    pub n_modes: usize,
}

/// Default truncation `min(n_interior, 256)`.
pub fn default_n_modes(grid: &Grid1D) -> usize {
    grid.n_interior.min(256)
}

pub fn eigensystem(op: &EllipticOperator1D, n_modes: usize) -> Result<EigenSystem> {
    let n = op.grid.n_interior;
    if n_modes == 0 || n_modes > n {
        return Err(Error::invalid(format!(
            "n_modes = {n_modes} outside 1..={n}"
        )));
    }
    let mat = assemble(op)?;
    let (vals, vecs) = symmetric_tridiagonal_eigen(&mat.diag, &mat.off)?;
    let scale = 1.0 / op.grid.h.sqrt();
    let mut phis = Vec::with_capacity(n_modes);
    // backward error |Av - λv| / (‖A‖ ‖v‖), all in the max norm
    let anorm = (0..n)
        .map(|j| {
            mat.diag[j].abs()
                + if j > 0 { mat.off[j - 1].abs() } else { 0.0 }
                + if j + 1 < n { mat.off[j].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for m in 0..n_modes {
        let mut v: Vec<f64> = (0..n).map(|r| vecs[r * n + m] * scale).collect();
        // sign convention: positive slope at the left end
        if v[0] < 0.0 || (v[0] == 0.0 && v.iter().find(|x| **x != 0.0).copied().unwrap_or(0.0) < 0.0) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let av = mat.matvec(&v);
        let res = av
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - vals[m] * b).abs())
            .fold(0.0, f64::max);
        let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        worst = worst.max(res / (anorm * vmax));
        phis.push(v);
    }
    if worst > 1e-10 || vals[0] <= 0.0 {
        return Err(Error::Numeric(format!(
            "eigen-solve residual {worst:e} (smallest eigenvalue {})",
            vals[0]
        )));
    }
    Ok(EigenSystem {
        grid: op.grid.clone(),
        lambdas: vals[..n_modes].to_vec(),
        phis,
        n_modes,
    })
}

impl EigenSystem {
    fn check(&self, psi: &[f64]) -> Result<()> {
        if psi.len() != self.grid.n_interior {
            return Err(Error::invalid(format!(
                "grid function has {} values, expected {}",
                psi.len(),
                self.grid.n_interior
            )));
        }
        Ok(())
    }

    /// Modal coefficients `(ψ, φ_n)`.
    pub fn coefficients(&self, psi: &[f64]) -> Vec<f64> {
        self.phis.iter().map(|phi| self.grid.inner(psi, phi)).collect()
    }

    /// `Σ c_n φ_n`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_interior];
        for (c, phi) in coeffs.iter().zip(&self.phis) {
            if *c != 0.0 {
                for (o, p) in out.iter_mut().zip(phi) {
                    *o += c * p;
                }
            }
        }
        out
    }

    /// `Σ f(λ_n) (ψ, φ_n) φ_n`.
    pub fn apply_fn(&self, psi: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
        self.check(psi)?;
        let mut c = self.coefficients(psi);
        for (ci, &l) in c.iter_mut().zip(&self.lambdas) {
            *ci *= f(l)?;
        }
        Ok(self.synthesize(&c))
    }

    /// `‖A^γ ψ‖` computed modally.
    pub fn power_norm(&self, gamma: f64, psi: &[f64]) -> f64 {
        self.coefficients(psi)
            .iter()
            .zip(&self.lambdas)
            .map(|(c, l)| (l.powf(gamma) * c).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `A^γ ψ = Σ λ_n^γ (ψ, φ_n) φ_n` over the retained modes.
pub fn frac_power_apply(eig: &EigenSystem, gamma: f64, psi: &[f64]) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma = {gamma} outside [-1, 1]")));
    }
    eig.apply_fn(psi, |l| Ok(l.powf(gamma)))
}

fn check_alpha_t(alpha: f64, t: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("resolvent needs t > 0, got {t}")));
    }
    Ok(())
}

/// `S(t)ψ = Σ E_{α,1}(-λ_n t^α) (ψ, φ_n) φ_n`.
pub fn resolvent_apply(eig: &EigenSystem, alpha: f64, t: f64, psi: &[f64]) -> Result<Vec<f64>> {
    check_alpha_t(alpha, t)?;
    let p = MLParams::new(alpha, 1.0)?;
    let ta = t.powf(alpha);
    eig.apply_fn(psi, |l| ml(p, -l * ta))
}

/// `S'(t)ψ = -t^{α-1} Σ λ_n E_{α,α}(-λ_n t^α) (ψ, φ_n) φ_n`.
pub fn resolvent_prime_apply(
    eig: &EigenSystem,
    alpha: f64,
    t: f64,
    psi: &[f64],
) -> Result<Vec<f64>> {
    check_alpha_t(alpha, t)?;
    let p = MLParams::new(alpha, alpha)?;
    let ta = t.powf(alpha);
    let pre = -t.powf(alpha - 1.0);
    eig.apply_fn(psi, |l| Ok(pre * l * ml(p, -l * ta)?))
}

/// `sup_{x>0} x^γ |E_{α,β}(-x)|` over a dense logarithmic sweep: the modal
/// constant behind `‖A^γ S(t)‖ <= C t^{-αγ}` (with `β = 1`) and
/// `‖A^{γ-1} S'(t)‖ <= C t^{α(1-γ)-1}` (with `β = α`).
pub fn resolvent_sup_constant(alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    let p = MLParams::new(alpha, beta)?;
    let mut best: f64 = 0.0;
    for i in 0..=600 {
        let x = 10f64.powf(-6.0 + 12.0 * i as f64 / 600.0);
        best = best.max(x.powf(gamma) * ml(p, -x)?.abs());
    }
    Ok(best)
}
