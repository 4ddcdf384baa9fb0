//! Time-domain solvers: Picard iteration on the mild-solution integral
//! equation and an implicit L1 scheme.

mod export;
mod l1;
mod picard;
pub mod quadrature;

pub use export::{encode_binary, read_binary, write_binary, write_csv};
pub use l1::l1_solve;
pub use picard::{picard_solve, PicardDiagnostics};
pub use quadrature::{caputo_l1_apply, caputo_l1_weights, rl_integral, TriangleTable};

use crate::error::{Error, Result};
use crate::mlf::{layer_sum, MultiIndexLayer};
use crate::spectral::{EigenSystem, Grid1D};
use crate::system::ProblemSpec;

/// Time nodes `0 = t_0 < t_1 < … < t_M = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    grading: f64,
}

impl TimeGrid {
    /// `t_j = T (j/M)^r`.
    pub fn graded(horizon: f64, m: usize, r: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon = {horizon} must be positive")));
        }
        if m == 0 {
            return Err(Error::invalid("time grid needs M >= 1"));
        }
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::invalid(format!("grading exponent r = {r} must be >= 1")));
        }
        let mut nodes: Vec<f64> = (0..=m)
            .map(|j| horizon * (j as f64 / m as f64).powf(r))
            .collect();
        nodes[m] = horizon;
        let g = TimeGrid { nodes, grading: r };
        g.check()?;
        Ok(g)
    }

    pub fn uniform(horizon: f64, m: usize) -> Result<Self> {
        Self::graded(horizon, m, 1.0)
    }

    /// Graded grid with the default exponent `r = 2/α_K`.
    pub fn for_spec(spec: &ProblemSpec, m: usize) -> Result<Self> {
        Self::graded(spec.horizon, m, 2.0 / spec.orders.smallest())
    }

    /// Arbitrary nodes; `0` is prepended when absent.
    pub fn from_nodes(mut nodes: Vec<f64>) -> Result<Self> {
        if nodes.first().copied() != Some(0.0) {
            nodes.insert(0, 0.0);
        }
        let g = TimeGrid {
            nodes,
            grading: f64::NAN,
        };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::invalid("time grid needs at least one positive node"));
        }
        if self.nodes.windows(2).any(|w| !(w[1] > w[0])) || !self.nodes.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("time nodes must be finite and strictly increasing"));
        }
        Ok(())
    }

    /// All nodes including `t_0 = 0`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of steps `M`.
    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.m()]
    }

    /// Grading exponent `r` (NaN for custom nodes).
    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Picard,
    L1,
    Laplace,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Picard => "picard",
            Method::L1 => "l1",
            Method::Laplace => "laplace",
        }
    }
}

/// `K` grid functions on every time node, stored as `[k][j][x]`.
#[derive(Clone, Debug)]
pub struct Solution {
    pub grid: Grid1D,
    pub tgrid: TimeGrid,
    pub k: usize,
    /// Orders `α_1 >= … >= α_K` of the producing problem.
    pub alphas: Vec<f64>,
    pub method: Method,
    /// Modal truncation, when the method uses one.
    pub n_modes: Option<usize>,
    pub picard: Option<PicardDiagnostics>,
    values: Vec<f64>,
}

impl Solution {
    pub fn zeros(grid: Grid1D, tgrid: TimeGrid, alphas: Vec<f64>, method: Method) -> Self {
        let k = alphas.len();
        let len = k * (tgrid.m() + 1) * grid.n_interior;
        Solution {
            grid,
            tgrid,
            k,
            alphas,
            method,
            n_modes: None,
            picard: None,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(
        grid: Grid1D,
        tgrid: TimeGrid,
        alphas: Vec<f64>,
        method: Method,
        values: Vec<f64>,
    ) -> Result<Self> {
        let k = alphas.len();
        let len = k * (tgrid.m() + 1) * grid.n_interior;
        if values.len() != len {
            return Err(Error::invalid(format!(
                "solution array has {} entries, expected {len}",
                values.len()
            )));
        }
        let mut s = Self::zeros(grid, tgrid, alphas, method);
        s.values = values;
        Ok(s)
    }

    #[inline]
    fn offset(&self, k: usize, j: usize) -> usize {
        (k * (self.tgrid.m() + 1) + j) * self.grid.n_interior
    }

    /// `u_k(t_j)` at the interior nodes.
    pub fn at(&self, k: usize, j: usize) -> &[f64] {
        let o = self.offset(k, j);
        &self.values[o..o + self.grid.n_interior]
    }

    pub fn at_mut(&mut self, k: usize, j: usize) -> &mut [f64] {
        let o = self.offset(k, j);
        let n = self.grid.n_interior;
        &mut self.values[o..o + n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `‖u(t_j)‖ = (Σ_k ‖u_k(t_j)‖²)^{1/2}`.
    pub fn norm_at(&self, j: usize) -> f64 {
        (0..self.k)
            .map(|k| self.grid.norm(self.at(k, j)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `(Σ_k ‖A_k^γ u_k(t_j)‖²)^{1/2}` over the modes of `eigs`.
    pub fn power_norm_at(&self, j: usize, gamma: f64, eigs: &[EigenSystem]) -> f64 {
        (0..self.k)
            .map(|k| eigs[k].power_norm(gamma, self.at(k, j)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Trace `t_j ↦ u_k(x_node, t_j)`.
    pub fn trace(&self, k: usize, node: usize) -> Vec<f64> {
        (0..=self.tgrid.m()).map(|j| self.at(k, j)[node]).collect()
    }

    /// Discrete `L²(0,T;L²)` norm (trapezoid in time).
    pub fn space_time_norm(&self) -> f64 {
        trapezoid(self.tgrid.nodes(), |j| self.norm_at(j).powi(2)).sqrt()
    }

    /// Discrete `L²(0,T;L²)` distance to a solution on the same grids.
    pub fn distance(&self, other: &Solution) -> Result<f64> {
        if self.k != other.k
            || self.grid != other.grid
            || self.tgrid.nodes().len() != other.tgrid.nodes().len()
            || self
                .tgrid
                .nodes()
                .iter()
                .zip(other.tgrid.nodes())
                .any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0))
        {
            return Err(Error::invalid("solutions live on different grids"));
        }
        let d = |j: usize| -> f64 {
            (0..self.k)
                .map(|k| {
                    let diff: Vec<f64> = self
                        .at(k, j)
                        .iter()
                        .zip(other.at(k, j))
                        .map(|(a, b)| a - b)
                        .collect();
                    self.grid.norm(&diff).powi(2)
                })
                .sum()
        };
        Ok(trapezoid(self.tgrid.nodes(), d).sqrt())
    }

    /// Largest `‖u(t_j) - v(t_j)‖` over the time nodes.
    pub fn max_distance(&self, other: &Solution) -> Result<f64> {
        self.distance(other)?;
        let mut worst: f64 = 0.0;
        for j in 0..=self.tgrid.m() {
            let mut s = 0.0;
            for k in 0..self.k {
                let diff: Vec<f64> = self
                    .at(k, j)
                    .iter()
                    .zip(other.at(k, j))
                    .map(|(a, b)| a - b)
                    .collect();
                s += self.grid.norm(&diff).powi(2);
            }
            worst = worst.max(s.sqrt());
        }
        Ok(worst)
    }
}

fn trapezoid(t: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = f(0);
    for j in 1..t.len() {
        let cur = f(j);
        acc += 0.5 * (t[j] - t[j - 1]) * (prev + cur);
        prev = cur;
    }
    acc
}

/// Least-squares line through `(log t, log ‖u(t)‖_{D(A^γ)})`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingFit {
    pub slope: f64,
    pub intercept: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_points: usize,
}

/// Initial-layer slope of `log ‖u(t)‖_{D(A^γ)}` against `log t`.
///
/// The fit window is the first decade of nodes above the time where the
/// retained spectrum is resolved, `λ_max t^{α₁} >= 10`.
pub fn smoothing_exponent(sol: &Solution, gamma: f64, eigs: &[EigenSystem]) -> Result<SmoothingFit> {
    if eigs.len() != sol.k {
        return Err(Error::invalid(format!(
            "{} eigensystems for {} components",
            eigs.len(),
            sol.k
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma = {gamma} outside [0, 1]")));
    }
    let lam_max = eigs
        .iter()
        .map(|e| *e.lambdas.last().unwrap_or(&1.0))
        .fold(0.0, f64::max);
    let t = sol.tgrid.nodes();
    let t_start = (10.0 / lam_max).powf(1.0 / sol.alphas[0]);
    let t_lo = t.iter().copied().find(|&x| x >= t_start && x > 0.0);
    let Some(t_lo) = t_lo else {
        return Err(Error::InsufficientData("no time node inside the fit window".into()));
    };
    let t_hi = 10.0 * t_lo;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (j, &tj) in t.iter().enumerate() {
        if tj >= t_lo && tj <= t_hi * (1.0 + 1e-12) {
            let nv = sol.power_norm_at(j, gamma, eigs);
            if nv > 0.0 && nv.is_finite() {
                xs.push(tj.ln());
                ys.push(nv.ln());
            }
        }
    }
    if xs.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} usable nodes in [{t_lo:e}, {t_hi:e}], need 5",
            xs.len()
        )));
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    Ok(SmoothingFit {
        slope,
        intercept,
        t_lo,
        t_hi,
        n_points: xs.len(),
    })
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `M^{m+1} Σ_{|j|=m} (m!/j!) t^{β·j - α₁γ} / Γ(β·j + 1 - α₁γ)` with
/// `shift = α₁γ`.
pub fn picard_envelope(m: usize, m_const: f64, betas: &[f64], shift: f64, t: f64) -> Result<f64> {
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::invalid("betas must be positive"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid(format!("envelope needs t > 0, got {t}")));
    }
    let zs: Vec<f64> = betas.iter().map(|b| t.powf(*b)).collect();
    let mut layer = MultiIndexLayer::origin(betas.len());
    for _ in 0..m {
        layer = layer.next(&zs);
    }
    let s = layer_sum(&layer, betas, 1.0 - shift);
    Ok(m_const.powi(m as i32 + 1) * t.powf(-shift) * s)
}
