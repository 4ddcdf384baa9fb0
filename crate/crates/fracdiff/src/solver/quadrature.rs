//! Product-integration weights on a time grid.

use super::TimeGrid;
use crate::error::{Error, Result};
use crate::special::{gamma, rgamma};

/// Lower-triangular table `W[j][i]`, `0 <= i <= j <= M`, stored row by row.
#[derive(Clone, Debug)]
pub struct TriangleTable {
    m: usize,
    data: Vec<f64>,
}

impl TriangleTable {
    pub fn zeros(m: usize) -> Self {
        TriangleTable {
            m,
            data: vec![0.0; (m + 1) * (m + 2) / 2],
        }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        let s = j * (j + 1) / 2;
        &self.data[s..s + j + 1]
    }

    #[inline]
    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let s = j * (j + 1) / 2;
        &mut self.data[s..s + j + 1]
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.row(j)[i]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `Σ_i W[j][i] f_i`.
    #[inline]
    pub fn dot_row(&self, j: usize, f: &[f64]) -> f64 {
        self.row(j).iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// A convolution kernel `K` on `σ > 0` together with its primitives
/// `Φ(σ) = ∫_0^σ K` and `Ψ(σ) = ∫_0^σ (σ-u) K(u) du`.
pub trait ConvKernel {
    fn kernel(&self, s: f64) -> f64;
    fn phi(&self, s: f64) -> f64;
    fn psi(&self, s: f64) -> f64;
}

/// Intervals thinner than this fraction of their distance to `t_j` are
/// integrated by Gauss-Legendre instead of primitive differences.
pub(crate) const THIN: f64 = 0.05;

pub(crate) const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
pub(crate) const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Weights of `∫_0^{t_j} K(t_j - τ) g(τ) dτ` for piecewise-linear `g`.
pub fn convolution_weights_into<K: ConvKernel + ?Sized>(
    tgrid: &TimeGrid,
    kern: &K,
    out: &mut TriangleTable,
) {
    let t = tgrid.nodes();
    let m = tgrid.m();
    let mut phi = vec![0.0; m + 1];
    let mut psi = vec![0.0; m + 1];
    for j in 1..=m {
        let tj = t[j];
        // primitives are only needed where the interval is not thin
        let mut need = vec![false; j + 1];
        for i in 1..=j {
            let b = tj - t[i];
            if b == 0.0 || t[i] - t[i - 1] > THIN * b {
                need[i] = true;
                need[i - 1] = true;
            }
        }
        for i in 0..j {
            if need[i] {
                let s = tj - t[i];
                phi[i] = kern.phi(s);
                psi[i] = kern.psi(s);
            }
        }
        phi[j] = 0.0;
        psi[j] = 0.0;
        let row = out.row_mut(j);
        row.iter_mut().for_each(|w| *w = 0.0);
        for i in 1..=j {
            // interval [t_{i-1}, t_i] maps to σ ∈ [b, a]
            let a = tj - t[i - 1];
            let b = tj - t[i];
            let h = a - b;
            let (a_w, b_w) = if b > 0.0 && h <= THIN * b {
                let mut aw = 0.0;
                let mut bw = 0.0;
                for q in 0..3 {
                    let u = b + 0.5 * h * (1.0 + GL3_X[q]);
                    let kv = kern.kernel(u) * GL3_W[q] * 0.5;
                    aw += kv * (u - b);
                    bw += kv * (a - u);
                }
                (aw, bw)
            } else {
                let bw = (psi[i - 1] - psi[i]) / h - phi[i];
                (phi[i - 1] - phi[i] - bw, bw)
            };
            row[i - 1] += a_w;
            row[i] += b_w;
        }
    }
}

struct PowerKernel {
    alpha: f64,
    c0: f64,
    c1: f64,
    c2: f64,
}

impl ConvKernel for PowerKernel {
    fn kernel(&self, s: f64) -> f64 {
        s.powf(self.alpha - 1.0) * self.c0
    }
    fn phi(&self, s: f64) -> f64 {
        s.powf(self.alpha) * self.c1
    }
    fn psi(&self, s: f64) -> f64 {
        s.powf(self.alpha + 1.0) * self.c2
    }
}

/// Riemann-Liouville weights: `K(σ) = σ^{α-1}/Γ(α)`.
pub fn rl_weights(alpha: f64, tgrid: &TimeGrid) -> TriangleTable {
    let mut w = TriangleTable::zeros(tgrid.m());
    let kern = PowerKernel {
        alpha,
        c0: rgamma(alpha),
        c1: rgamma(alpha + 1.0),
        c2: rgamma(alpha + 2.0),
    };
    convolution_weights_into(tgrid, &kern, &mut w);
    w
}

/// `J^α f(t_j) = (1/Γ(α)) ∫_0^{t_j} (t_j-τ)^{α-1} f(τ) dτ` by product
/// integration of the piecewise-linear interpolant of `samples`
/// (given at all nodes including `t_0 = 0`).
pub fn rl_integral(alpha: f64, samples: &[f64], tgrid: &TimeGrid) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha = {alpha} must be positive")));
    }
    if samples.len() != tgrid.m() + 1 {
        return Err(Error::invalid(format!(
            "expected {} samples, got {}",
            tgrid.m() + 1,
            samples.len()
        )));
    }
    let w = rl_weights(alpha, tgrid);
    Ok((0..=tgrid.m()).map(|j| w.dot_row(j, samples)).collect())
}

/// L1 weights: `∂_t^α f(t_j) ≈ Σ_{i=1}^{j} w_{j,i} (f(t_i) - f(t_{i-1}))` with
/// `w_{j,i} = ((t_j-t_{i-1})^{1-α} - (t_j-t_i)^{1-α}) / (Γ(2-α) (t_i-t_{i-1}))`.
/// Entry `i = 0` of every row is unused and zero.
pub fn caputo_l1_weights(alpha: f64, tgrid: &TimeGrid) -> Result<TriangleTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    let t = tgrid.nodes();
    let m = tgrid.m();
    let g = 1.0 / gamma(2.0 - alpha);
    let e = 1.0 - alpha;
    let mut w = TriangleTable::zeros(m);
    for j in 1..=m {
        let row = w.row_mut(j);
        for i in 1..=j {
            let tau = t[i] - t[i - 1];
            let b = t[j] - t[i];
            // a^e - b^e without cancellation when tau << b
            let diff = if b > 0.0 {
                b.powf(e) * (e * (tau / b).ln_1p()).exp_m1()
            } else {
                tau.powf(e)
            };
            row[i] = diff * g / tau;
        }
    }
    Ok(w)
}

/// Applies L1 weights to samples `f_0 … f_M`.
pub fn caputo_l1_apply(w: &TriangleTable, f: &[f64], j: usize) -> f64 {
    let row = w.row(j);
    (1..=j).map(|i| row[i] * (f[i] - f[i - 1])).sum()
}
