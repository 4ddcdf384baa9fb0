//! Problem description for the coupled system
//!
//! ```text
//! ∂_t^{α_k} u_k = (a_k u_k')' + Σ_ℓ b_{kℓ} u_ℓ' + Σ_ℓ c_{kℓ} u_ℓ + F_k,   k = 1..K
//! ```
//!
//! on an interval with homogeneous Dirichlet data, and the structural checks on
//! the coupling matrix `C = (c_{kℓ})`.

pub mod expr;
pub mod problem;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::spectral::{EllipticOperator1D, Grid1D};

pub use expr::Expr;
pub use problem::ProblemFile;

/// Threshold below which a sampled value counts as negative.
pub const NONNEG_TOL: f64 = 1e-12;
/// Threshold above which a sampled value counts as "not identically zero".
pub const NONZERO_TOL: f64 = 1e-8;
/// Tolerance on the largest eigenvalue of the symmetric part of `C`.
pub const SEMIDEF_TOL: f64 = 1e-12;

/// Caputo orders `1 > α₁ >= … >= α_K > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderVector {
    alphas: Vec<f64>,
}

impl OrderVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::invalid("order vector is empty"));
        }
        for (i, a) in alphas.iter().enumerate() {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(Error::invalid(format!("alpha_{} = {a} outside (0, 1)", i + 1)));
            }
        }
        if alphas.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid(format!(
                "orders must be non-increasing, got {alphas:?}"
            )));
        }
        Ok(OrderVector { alphas })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k]
    }

    pub fn largest(&self) -> f64 {
        self.alphas[0]
    }

    pub fn smallest(&self) -> f64 {
        *self.alphas.last().unwrap()
    }

    /// `β_k = α_k (1 - γ)`.
    pub fn betas(&self, gamma: f64) -> Vec<f64> {
        self.alphas.iter().map(|a| a * (1.0 - gamma)).collect()
    }

    /// `β̄ = max β_k`.
    pub fn beta_bar(&self, gamma: f64) -> f64 {
        self.largest() * (1.0 - gamma)
    }

    /// `β̲ = min β_k`.
    pub fn beta_low(&self, gamma: f64) -> f64 {
        self.smallest() * (1.0 - gamma)
    }
}

/// A field sampled on the interior nodes at a set of times, linearly
/// interpolated in `t` and held constant outside the sampled range.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SampledField {
    pub fn constant_in_time(values: Vec<f64>) -> Self {
        SampledField {
            times: vec![0.0],
            values: vec![values],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant_in_time(vec![0.0; n])
    }

    pub fn from_fn(grid: &Grid1D, times: &[f64], f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.nodes();
        SampledField {
            times: times.to_vec(),
            values: times
                .iter()
                .map(|&t| xs.iter().map(|&x| f(x, t)).collect())
                .collect(),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.times.len() == 1 || self.values.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| *x == 0.0))
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    /// Values at time `t`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.at_into(t, &mut out);
        out
    }

    pub fn at_into(&self, t: f64, out: &mut [f64]) {
        if self.times.len() == 1 || t <= self.times[0] {
            out.copy_from_slice(&self.values[0]);
            return;
        }
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            out.copy_from_slice(&self.values[last]);
            return;
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        for ((o, a), b) in out.iter_mut().zip(&self.values[i]).zip(&self.values[i + 1]) {
            *o = (1.0 - w) * a + w * b;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Lower-order coupling: advection `b_{kℓ}` and reaction `c_{kℓ}`, stored
/// row-major (`index = k*K + ℓ`).
#[derive(Clone, Debug)]
pub struct CouplingCoeffs {
    pub k: usize,
    pub b: Vec<SampledField>,
    pub c: Vec<SampledField>,
}

impl CouplingCoeffs {
    pub fn new(k: usize, b: Vec<SampledField>, c: Vec<SampledField>) -> Result<Self> {
        if b.len() != k * k || c.len() != k * k {
            return Err(Error::invalid(format!("coupling needs {}x{} entries", k, k)));
        }
        if b.iter().chain(&c).any(|f| !f.is_finite()) {
            return Err(Error::invalid("coupling coefficients must be finite"));
        }
        Ok(CouplingCoeffs { k, b, c })
    }

    /// Reaction-only coupling with a constant matrix.
    pub fn constant_matrix(n: usize, c: &[Vec<f64>]) -> Result<Self> {
        let k = c.len();
        let cs = c
            .iter()
            .flat_map(|row| row.iter().map(|&v| SampledField::constant_in_time(vec![v; n])))
            .collect();
        let bs = (0..k * k).map(|_| SampledField::zeros(n)).collect();
        Self::new(k, bs, cs)
    }

    pub fn zeros(k: usize, n: usize) -> Self {
        let z = || (0..k * k).map(|_| SampledField::zeros(n)).collect();
        CouplingCoeffs { k, b: z(), c: z() }
    }

    pub fn b_at(&self, k: usize, l: usize) -> &SampledField {
        &self.b[k * self.k + l]
    }

    pub fn c_at(&self, k: usize, l: usize) -> &SampledField {
        &self.c[k * self.k + l]
    }

    /// `b ≡ 0`.
    pub fn weakly_coupled(&self) -> bool {
        self.b.iter().all(|f| f.is_zero())
    }

    pub fn time_independent(&self) -> bool {
        self.b.iter().chain(&self.c).all(|f| f.is_time_independent())
    }

    /// `L₀ = max(1, Σ_{k,ℓ} ‖b_{kℓ}‖_∞ + ‖c_{kℓ}‖_∞)`.
    pub fn l0(&self) -> f64 {
        let s: f64 = self.b.iter().chain(&self.c).map(|f| f.sup_norm()).sum();
        s.max(1.0)
    }

    /// `C(x_j)` at time `t` as a row-major `K×K` matrix.
    pub fn c_matrix(&self, node: usize, t: f64) -> Vec<f64> {
        self.c.iter().map(|f| f.at(t)[node]).collect()
    }

    fn require_static_weak(&self) -> Result<()> {
        if !self.weakly_coupled() {
            return Err(Error::Precondition(
                "check requires a weakly coupled system (b = 0)".into(),
            ));
        }
        if !self.time_independent() {
            return Err(Error::Precondition(
                "check requires time-independent coefficients".into(),
            ));
        }
        Ok(())
    }
}

/// A complete initial-boundary value problem on one shared grid.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub orders: OrderVector,
    pub operators: Vec<EllipticOperator1D>,
    pub coupling: CouplingCoeffs,
    pub source: Vec<SampledField>,
    pub u0: Vec<Vec<f64>>,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn new(
        orders: OrderVector,
        operators: Vec<EllipticOperator1D>,
        coupling: CouplingCoeffs,
        source: Vec<SampledField>,
        u0: Vec<Vec<f64>>,
        horizon: f64,
    ) -> Result<Self> {
        let s = ProblemSpec {
            orders,
            operators,
            coupling,
            source,
            u0,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.orders.k();
        if self.operators.len() != k || self.source.len() != k || self.u0.len() != k {
            return Err(Error::invalid(format!(
                "expected {k} operators, sources and initial values"
            )));
        }
        if self.coupling.k != k {
            return Err(Error::invalid("coupling size does not match K"));
        }
        let g = &self.operators[0].grid;
        let n = g.n_interior;
        for op in &self.operators {
            if op.grid != *g {
                return Err(Error::invalid("all components must share one grid"));
            }
        }
        for (i, u) in self.u0.iter().enumerate() {
            if u.len() != n {
                return Err(Error::invalid(format!("u0[{i}] has the wrong length")));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("u0[{i}] is not finite")));
            }
        }
        for f in self.source.iter().chain(&self.coupling.b).chain(&self.coupling.c) {
            if f.n() != n || !f.is_finite() {
                return Err(Error::invalid("sampled field has wrong size or non-finite values"));
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon T must be positive"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.orders.k()
    }

    pub fn grid(&self) -> &Grid1D {
        &self.operators[0].grid
    }

    pub fn has_source(&self) -> bool {
        self.source.iter().any(|f| !f.is_zero())
    }

    /// Same problem with different orders (used by the inverse solver).
    pub fn with_orders(&self, orders: OrderVector) -> Result<Self> {
        if orders.k() != self.k() {
            return Err(Error::invalid("order vector has the wrong length"));
        }
        let mut s = self.clone();
        s.orders = orders;
        Ok(s)
    }

    pub fn with_u0(&self, u0: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = self.clone();
        s.u0 = u0;
        s.validate()?;
        Ok(s)
    }
}

/// Per-entry verdict for an off-diagonal coupling coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryReport {
    pub k: usize,
    pub l: usize,
    pub nonnegative: bool,
    pub positive_somewhere: bool,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CooperativeReport {
    pub entries: Vec<EntryReport>,
    /// Every off-diagonal entry is `>= 0` and not identically zero.
    pub strict: bool,
    /// Every off-diagonal entry is `>= 0`.
    pub weak: bool,
    /// `Σ_ℓ c_{kℓ} <= 0` at every node for every row.
    pub row_sums_nonpositive: bool,
    pub worst_row_sum: f64,
}

pub fn validate_cooperative(coupling: &CouplingCoeffs) -> Result<CooperativeReport> {
    coupling.require_static_weak()?;
    let k = coupling.k;
    let mut entries = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let f = coupling.c_at(i, j);
            let (mn, mx) = (f.min(), f.max());
            entries.push(EntryReport {
                k: i,
                l: j,
                nonnegative: mn >= -NONNEG_TOL,
                positive_somewhere: mx >= NONZERO_TOL,
                min: mn,
                max: mx,
            });
        }
    }
    let weak = entries.iter().all(|e| e.nonnegative);
    let strict = weak && entries.iter().all(|e| e.positive_somewhere);
    let n = coupling.c[0].n();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..k {
        let rows: Vec<&Vec<f64>> = (0..k).map(|j| &coupling.c_at(i, j).values[0]).collect();
        for node in 0..n {
            let s: f64 = rows.iter().map(|r| r[node]).sum();
            worst = worst.max(s);
        }
    }
    Ok(CooperativeReport {
        entries,
        strict,
        weak,
        row_sums_nonpositive: worst <= NONNEG_TOL,
        worst_row_sum: worst,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemidefiniteReport {
    pub holds: bool,
    pub worst_eigenvalue: f64,
    pub worst_node: usize,
}

/// Largest eigenvalue of `(C + Cᵀ)/2` over the nodes.
pub fn validate_negative_semidefinite(coupling: &CouplingCoeffs) -> Result<SemidefiniteReport> {
    coupling.require_static_weak()?;
    let k = coupling.k;
    let n = coupling.c[0].n();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_node = 0;
    for node in 0..n {
        let c = coupling.c_matrix(node, 0.0);
        let mut s = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                s[i * k + j] = 0.5 * (c[i * k + j] + c[j * k + i]);
            }
        }
        let top = *symmetric_eigenvalues(k, &s).last().unwrap();
        if top > worst {
            worst = top;
            worst_node = node;
        }
    }
    Ok(SemidefiniteReport {
        holds: worst <= SEMIDEF_TOL,
        worst_eigenvalue: worst,
        worst_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_vector_invariants() {
        assert!(OrderVector::new(vec![0.8, 0.5]).is_ok());
        assert!(OrderVector::new(vec![0.5, 0.8]).is_err());
        assert!(OrderVector::new(vec![1.0]).is_err());
        assert!(OrderVector::new(vec![]).is_err());
        let o = OrderVector::new(vec![0.8, 0.4]).unwrap();
        assert_eq!(o.betas(0.5), vec![0.4, 0.2]);
    }

    #[test]
    fn sampled_field_interpolates_in_time() {
        let f = SampledField {
            times: vec![0.0, 1.0],
            values: vec![vec![0.0, 2.0], vec![1.0, 4.0]],
        };
        assert_eq!(f.at(0.25), vec![0.25, 2.5]);
        assert_eq!(f.at(3.0), vec![1.0, 4.0]);
        assert!(!f.is_time_independent());
    }

    #[test]
    fn semidefinite_requires_weak_coupling() {
        let mut c = CouplingCoeffs::constant_matrix(4, &[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        c.b[1] = SampledField::constant_in_time(vec![1.0; 4]);
        assert!(matches!(
            validate_negative_semidefinite(&c),
            Err(Error::Precondition(_))
        ));
    }
}
