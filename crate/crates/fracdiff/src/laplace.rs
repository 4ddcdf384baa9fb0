//! Laplace-domain solves, sector-contour inversion and long-time decay.
//!
//! For a weakly coupled, time-independent problem without source the
//! transform `û(s)` solves `(A + s^α − C) û = s^{α−1} u₀` with
//! `s^α = diag(s^{α₁}, …, s^{α_K})` on the principal branch.  The time-domain
//! solution is recovered from
//!
//! ```text
//! u(t) = (1/π) Im ∫_ε^∞ e^{s t} û(s) e^{iθ} dr,  s = r e^{iθ}
//!      + (1/π) Re ∫_0^θ e^{s t} û(s) ε e^{iφ} dφ,  s = ε e^{iφ}
//! ```
//!
//! which folds the lower ray and lower half of the arc onto the upper ones by
//! conjugate symmetry of real data.

use std::f64::consts::{FRAC_PI_2, PI};
use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::BlockTridiag;
use crate::solver::{linear_fit, Method, Solution, TimeGrid};
use crate::special::{gamma, upper_gamma};
use crate::spectral::{assemble, Grid1D, SymTridiag};
use crate::system::{validate_negative_semidefinite, OrderVector, ProblemSpec};

/// Relative residual above which a Laplace-domain solve is rejected.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Quadrature error (relative to `max(1, ‖u₀‖)`) above which an inversion is
/// rejected.
pub const INVERSION_TOL: f64 = 1e-8;

// 7-point Gauss and 15-point Kronrod nodes on [-1, 1], non-negative half.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for XK[1], XK[3], XK[5], XK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const WEIGHTS_K: [f64; 15] = [
    WK[0], WK[1], WK[2], WK[3], WK[4], WK[5], WK[6], WK[7], WK[6], WK[5], WK[4], WK[3], WK[2], WK[1],
    WK[0],
];
const WEIGHTS_G: [f64; 15] = [
    0.0, WG[0], 0.0, WG[1], 0.0, WG[2], 0.0, WG[3], 0.0, WG[2], 0.0, WG[1], 0.0, WG[0], 0.0,
];

/// `|e^{st}|` below `e^{-RAY_CUTOFF}` is dropped.
const RAY_CUTOFF: f64 = 37.0;
/// Ratio of consecutive geometric panels near the origin.
const GEOM_RATIO: f64 = 2.0;
/// Phase advance of `e^{st}` across one uniform panel.
const PANEL_PHASE: f64 = 4.0;

/// Deformed Bromwich path: rays `arg s = ±θ` for `|s| ≥ ε` joined by an arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorContour {
    pub theta: f64,
    pub epsilon: f64,
}

impl SectorContour {
    /// Open interval of admissible angles for largest order `α₁`.
    pub fn admissible(alpha1: f64) -> (f64, f64) {
        (FRAC_PI_2, (PI / (2.0 * alpha1)).min(PI))
    }

    pub fn new(theta: f64, epsilon: f64, alpha1: f64) -> Result<Self> {
        let (lo, hi) = Self::admissible(alpha1);
        if !(theta > lo && theta < hi) {
            return Err(Error::invalid(format!(
                "contour angle {theta} outside the admissible interval ({lo}, {hi})"
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("contour radius {epsilon} must be >= 0")));
        }
        Ok(SectorContour { theta, epsilon })
    }

    /// Midpoint of the admissible interval, no arc.
    pub fn default_for(orders: &OrderVector) -> Self {
        let (lo, hi) = Self::admissible(orders.largest());
        SectorContour {
            theta: 0.5 * (lo + hi),
            epsilon: 0.0,
        }
    }

    fn check(&self, orders: &OrderVector) -> Result<()> {
        Self::new(self.theta, self.epsilon, orders.largest()).map(|_| ())
    }

    /// Quadrature panels serving every `t ∈ [t_lo, t_hi]`.
    ///
    /// `alpha_min` sets how close to the origin the rays are resolved.
    pub fn panels(&self, t_lo: f64, t_hi: f64, alpha_min: f64) -> Vec<Panel> {
        let (sin, cos) = self.theta.sin_cos();
        let dir = Complex64::new(cos, sin);
        let mut out = Vec::new();
        let r_far = (RAY_CUTOFF / (t_lo * cos.abs())).max(self.epsilon);
        let width = PANEL_PHASE / (t_hi * sin);
        let mut a;
        if self.epsilon > 0.0 {
            a = self.epsilon;
            let r_mid = (width / (GEOM_RATIO - 1.0)).max(self.epsilon).min(r_far);
            while a < r_mid {
                let b = (a * GEOM_RATIO).min(r_mid);
                out.push(Panel::ray(a, b, dir));
                a = b;
            }
        } else {
            // dyadic panels [2^j, 2^{j+1}] until they are as wide as the uniform ones
            let first = 1e-16f64.powf(1.0 / alpha_min) / t_hi;
            let mut j = first.log2().floor() as i32;
            while exp2(j) < width.min(r_far) {
                let mut p = Panel::ray(exp2(j), exp2(j + 1), dir);
                p.dyadic = Some(j);
                out.push(p);
                j += 1;
            }
            a = exp2(j);
        }
        let count = ((r_far - a) / width).ceil().max(0.0) as usize;
        if count > 0 {
            let w = (r_far - a) / count as f64;
            for i in 0..count {
                out.push(Panel::ray(a + i as f64 * w, a + (i + 1) as f64 * w, dir));
            }
        }
        if self.epsilon > 0.0 {
            let phase = self.epsilon * t_hi * self.theta;
            let count = (phase / PANEL_PHASE).ceil().max(2.0) as usize;
            let w = self.theta / count as f64;
            for i in 0..count {
                out.push(Panel::arc(i as f64 * w, (i + 1) as f64 * w, self.epsilon));
            }
        }
        out
    }
}

fn exp2(j: i32) -> f64 {
    2f64.powi(j)
}

/// One Gauss–Kronrod panel on a ray or on the arc.
#[derive(Clone, Debug)]
pub struct Panel {
    /// Kronrod nodes in the `s` plane.
    pub s: [Complex64; 15],
    /// Path factor (`e^{iθ}` on rays, `εe^{iφ}` on the arc) times the panel
    /// half-width.
    pub jac: [Complex64; 15],
    /// Rays contribute through `Im`, the arc through `Re`.
    pub on_arc: bool,
    /// `j` for the ray panel `[2^j, 2^{j+1}]`, shared between time blocks.
    pub dyadic: Option<i32>,
}

impl Panel {
    fn build(a: f64, b: f64, map: impl Fn(f64) -> (Complex64, Complex64), on_arc: bool) -> Self {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let zero = Complex64::new(0.0, 0.0);
        let mut p = Panel {
            s: [zero; 15],
            jac: [zero; 15],
            on_arc,
            dyadic: None,
        };
        for i in 0..15 {
            let x = if i < 8 { -XK[i] } else { XK[14 - i] };
            let (s, ds) = map(c + h * x);
            p.s[i] = s;
            p.jac[i] = ds * h;
        }
        p
    }

    fn ray(a: f64, b: f64, dir: Complex64) -> Self {
        Self::build(a, b, |r| (dir * r, dir), false)
    }

    fn arc(a: f64, b: f64, eps: f64) -> Self {
        Self::build(
            a,
            b,
            |phi| {
                let e = Complex64::from_polar(eps, phi);
                (e, e)
            },
            true,
        )
    }
}

#[derive(Clone, Debug)]
pub struct LaplaceSolveResult {
    pub s: Complex64,
    /// `û_k` on the interior nodes, one vector per component.
    pub u_hat: Vec<Vec<Complex64>>,
    /// `‖M û − b‖ / ‖b‖` of the discrete block system.
    pub residual: f64,
    /// Smallest over largest pivot modulus in the block elimination.
    pub pivot_ratio: f64,
}

/// Assembled Laplace-domain operator of a problem, reusable across `s`.
#[derive(Clone, Debug)]
pub struct LaplaceSystem {
    k: usize,
    grid: Grid1D,
    alphas: Vec<f64>,
    stencils: Vec<SymTridiag>,
    /// `C(x_i)` row-major, node after node.
    cmat: Vec<f64>,
    /// Node-major initial data.
    u0: Vec<f64>,
    u0_norm: f64,
}

impl LaplaceSystem {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.coupling.weakly_coupled() {
            return Err(Error::Precondition(
                "Laplace-domain solver needs a weakly coupled system (b = 0)".into(),
            ));
        }
        if !spec.coupling.time_independent() {
            return Err(Error::Precondition(
                "Laplace-domain solver needs time-independent coefficients".into(),
            ));
        }
        if spec.has_source() {
            return Err(Error::Precondition(
                "Laplace-domain solver needs a zero source term".into(),
            ));
        }
        let k = spec.k();
        let grid = spec.grid().clone();
        let n = grid.n_interior;
        let stencils = spec
            .operators
            .iter()
            .map(assemble)
            .collect::<Result<Vec<_>>>()?;
        let mut cmat = Vec::with_capacity(n * k * k);
        for i in 0..n {
            cmat.extend(spec.coupling.c_matrix(i, 0.0));
        }
        let mut u0 = vec![0.0; n * k];
        for (c, comp) in spec.u0.iter().enumerate() {
            for (i, v) in comp.iter().enumerate() {
                u0[i * k + c] = *v;
            }
        }
        let u0_norm = spec.u0.iter().map(|v| grid.norm(v).powi(2)).sum::<f64>().sqrt();
        Ok(LaplaceSystem {
            k,
            grid,
            alphas: spec.orders.as_slice().to_vec(),
            stencils,
            cmat,
            u0,
            u0_norm,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `‖u₀‖` summed in `L²` over the components.
    pub fn u0_norm(&self) -> f64 {
        self.u0_norm
    }

    /// Same system with the orders replaced; the ordering `α₁ >= … >= α_K` is
    /// not enforced so that optimisers may cross it.
    pub fn with_alphas(&self, alphas: &[f64]) -> Result<Self> {
        if alphas.len() != self.k || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid(format!("orders {alphas:?} must be {} values in (0, 1)", self.k)));
        }
        let mut out = self.clone();
        out.alphas = alphas.to_vec();
        Ok(out)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `û` at a real `s > 0`.
    pub fn solve_real(&self, s: f64) -> Result<Vec<Vec<f64>>> {
        let r = self.solve(Complex64::new(s, 0.0))?;
        Ok(r.u_hat.iter().map(|v| v.iter().map(|z| z.re).collect()).collect())
    }

    /// Solution in node-major layout plus residual and pivot ratio.
    fn solve_flat(&self, s: Complex64) -> Result<(Vec<Complex64>, f64, f64)> {
        if !(s.norm() > 0.0 && s.is_finite()) || (s.im == 0.0 && s.re < 0.0) {
            return Err(Error::invalid(format!("s = {s} is not in the cut plane")));
        }
        let (k, n) = (self.k, self.grid.n_interior);
        let ln_s = s.ln();
        let shifts: Vec<Complex64> = self.alphas.iter().map(|a| (ln_s * *a).exp()).collect();
        let mut sys = BlockTridiag::<Complex64>::zeros(k, n);
        let mut rhs = vec![Complex64::new(0.0, 0.0); n * k];
        for i in 0..n {
            for r in 0..k {
                let st = &self.stencils[r];
                let d = sys.idx(i, r, r);
                sys.diag[d] += st.diag[i] + shifts[r];
                if i > 0 {
                    sys.lower[d] += st.off[i - 1];
                }
                if i + 1 < n {
                    sys.upper[d] += st.off[i];
                }
                for c in 0..k {
                    let e = sys.idx(i, r, c);
                    sys.diag[e] -= self.cmat[(i * k + r) * k + c];
                }
                rhs[i * k + r] = shifts[r] / s * self.u0[i * k + r];
            }
        }
        let (x, pivot) = sys.solve(&rhs).map_err(|e| {
            Error::Numeric(format!("Laplace-domain system singular at s = {s}: {e}"))
        })?;
        let bnorm = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let residual = if bnorm > 0.0 {
            let mx = sys.matvec(&x);
            mx.iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / bnorm
        } else {
            0.0
        };
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::Numeric(format!(
                "Laplace-domain residual {residual:e} at s = {s} (pivot ratio {pivot:e})"
            )));
        }
        Ok((x, residual, pivot))
    }

    pub fn solve(&self, s: Complex64) -> Result<LaplaceSolveResult> {
        let (x, residual, pivot_ratio) = self.solve_flat(s)?;
        let (k, n) = (self.k, self.grid.n_interior);
        let u_hat = (0..k)
            .map(|c| (0..n).map(|i| x[i * k + c]).collect())
            .collect();
        Ok(LaplaceSolveResult {
            s,
            u_hat,
            residual,
            pivot_ratio,
        })
    }

    /// Discrete `H²` norm `(Σ_k ‖u_k‖² + ‖A_k u_k‖²)^{1/2}` of real components.
    pub fn h2_norm(&self, u: &[Vec<f64>]) -> f64 {
        u.iter()
            .zip(&self.stencils)
            .map(|(v, st)| self.grid.norm(v).powi(2) + self.grid.norm(&st.matvec(v)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn h2_norm_complex(&self, x: &[Complex64]) -> f64 {
        let (k, n) = (self.k, self.grid.n_interior);
        let mut total = 0.0;
        for c in 0..k {
            for part in 0..2 {
                let v: Vec<f64> = (0..n)
                    .map(|i| if part == 0 { x[i * k + c].re } else { x[i * k + c].im })
                    .collect();
                total += self.grid.norm(&v).powi(2)
                    + self.grid.norm(&self.stencils[c].matvec(&v)).powi(2);
            }
        }
        total.sqrt()
    }

    /// Inverts at every time in `times`, which must be positive.
    pub fn invert(&self, times: &[f64], contour: &SectorContour) -> Result<Vec<ContourValue>> {
        if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("inversion times must be positive and finite"));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
        let mut out: Vec<Option<ContourValue>> = vec![None; times.len()];
        let alpha_min = self.alphas.iter().copied().fold(f64::INFINITY, f64::min);
        let mut cache = HashMap::new();
        let mut start = 0;
        while start < order.len() {
            let t_lo = times[order[start]];
            let mut end = start;
            while end < order.len() && times[order[end]] <= 2.0 * t_lo {
                end += 1;
            }
            let block: Vec<f64> = order[start..end].iter().map(|&i| times[i]).collect();
            let t_hi = *block.last().unwrap();
            let panels = contour.panels(t_lo, t_hi, alpha_min);
            let top = panels.iter().filter_map(|p| p.dyadic).max();
            cache.retain(|j, _| Some(*j) <= top);
            let missing: Vec<&Panel> = panels
                .iter()
                .filter(|p| p.dyadic.is_some_and(|j| !cache.contains_key(&j)))
                .collect();
            let solved = missing
                .par_iter()
                .map(|p| self.panel_solves(p).map(|x| (p.dyadic.unwrap(), Arc::new(x))))
                .collect::<Result<Vec<_>>>()?;
            cache.extend(solved);
            let values = self.invert_block(&block, &panels, &cache)?;
            for (slot, v) in order[start..end].iter().zip(values) {
                out[*slot] = Some(v);
            }
            start = end;
        }
        Ok(out.into_iter().map(|v| v.unwrap()).collect())
    }

    fn panel_solves(&self, p: &Panel) -> Result<Vec<Vec<Complex64>>> {
        p.s.iter().map(|s| self.solve_flat(*s).map(|r| r.0)).collect()
    }

    fn invert_block(
        &self,
        times: &[f64],
        panels: &[Panel],
        cache: &HashMap<i32, Arc<Vec<Vec<Complex64>>>>,
    ) -> Result<Vec<ContourValue>> {
        let (k, n) = (self.k, self.grid.n_interior);
        let len = n * k;
        let nt = times.len();
        // per time: Kronrod sum followed by the error estimate
        let zero = || vec![vec![0.0; 2 * len]; nt];
        let sums = panels
            .par_iter()
            .map(|p| -> Result<Vec<Vec<f64>>> {
                let owned;
                let xs: &[Vec<Complex64>] = match p.dyadic.and_then(|j| cache.get(&j)) {
                    Some(x) => x,
                    None => {
                        owned = self.panel_solves(p)?;
                        &owned
                    }
                };
                let mut res = vec![vec![0.0; 2 * len]; nt];
                let mut e = [Complex64::new(0.0, 0.0); 15];
                let mut f = [0.0; 15];
                for (j, t) in times.iter().enumerate() {
                    for q in 0..15 {
                        e[q] = (p.s[q] * *t).exp() * p.jac[q];
                    }
                    for i in 0..len {
                        for q in 0..15 {
                            let v = xs[q][i];
                            f[q] = if p.on_arc {
                                e[q].re * v.re - e[q].im * v.im
                            } else {
                                e[q].re * v.im + e[q].im * v.re
                            };
                        }
                        let (mut kr, mut ga) = (0.0, 0.0);
                        for q in 0..15 {
                            kr += WEIGHTS_K[q] * f[q];
                            ga += WEIGHTS_G[q] * f[q];
                        }
                        let mean = 0.5 * kr;
                        let asc: f64 = (0..15).map(|q| WEIGHTS_K[q] * (f[q] - mean).abs()).sum();
                        let mut err = (kr - ga).abs();
                        if asc > 0.0 && err > 0.0 {
                            let x = (200.0 * err / asc).min(1.0);
                            err = asc * x * x.sqrt();
                        }
                        res[j][i] = kr / PI;
                        res[j][len + i] = err / PI;
                    }
                }
                Ok(res)
            })
            .try_reduce(zero, |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for (u, v) in x.iter_mut().zip(y) {
                        *u += v;
                    }
                }
                Ok(a)
            })?;
        let scale = self.u0_norm.max(1.0);
        let mut out = Vec::with_capacity(nt);
        for (j, t) in times.iter().enumerate() {
            let u: Vec<Vec<f64>> = (0..k)
                .map(|c| (0..n).map(|i| sums[j][i * k + c]).collect())
                .collect();
            let err_sq: f64 = (0..k)
                .map(|c| {
                    let v: Vec<f64> = (0..n).map(|i| sums[j][len + i * k + c]).collect();
                    self.grid.norm(&v).powi(2)
                })
                .sum();
            let error_estimate = err_sq.sqrt();
            if !(error_estimate <= INVERSION_TOL * scale) {
                return Err(Error::Numeric(format!(
                    "contour inversion at t = {t}: quadrature error estimate {error_estimate:e}"
                )));
            }
            out.push(ContourValue {
                t: *t,
                u,
                error_estimate,
            });
        }
        Ok(out)
    }
}

/// Inverted solution at one time.
#[derive(Clone, Debug)]
pub struct ContourValue {
    pub t: f64,
    /// One grid function per component.
    pub u: Vec<Vec<f64>>,
    /// Embedded Gauss–Kronrod error estimate in the summed `L²` norm.
    pub error_estimate: f64,
}

pub fn laplace_elliptic_solve(spec: &ProblemSpec, s: Complex64) -> Result<LaplaceSolveResult> {
    LaplaceSystem::new(spec)?.solve(s)
}

pub fn contour_invert(spec: &ProblemSpec, t: f64, contour: &SectorContour) -> Result<ContourValue> {
    contour_invert_many(spec, &[t], contour).map(|mut v| v.remove(0))
}

pub fn contour_invert_many(
    spec: &ProblemSpec,
    times: &[f64],
    contour: &SectorContour,
) -> Result<Vec<ContourValue>> {
    contour.check(&spec.orders)?;
    LaplaceSystem::new(spec)?.invert(times, contour)
}

/// Contour-inverted solution on every node of `tgrid` (`u₀` at `t = 0`).
pub fn contour_solution(spec: &ProblemSpec, tgrid: &TimeGrid, contour: &SectorContour) -> Result<Solution> {
    let vals = contour_invert_many(spec, &tgrid.nodes()[1..], contour)?;
    let mut sol = Solution::zeros(
        spec.grid().clone(),
        tgrid.clone(),
        spec.orders.as_slice().to_vec(),
        Method::Laplace,
    );
    for k in 0..spec.k() {
        sol.at_mut(k, 0).copy_from_slice(&spec.u0[k]);
        for (j, v) in vals.iter().enumerate() {
            sol.at_mut(k, j + 1).copy_from_slice(&v.u[k]);
        }
    }
    Ok(sol)
}

/// Resolvent-bound sweep along both rays.
#[derive(Clone, Debug)]
pub struct ResolventCheck {
    /// Twice the largest ratio over the calibration band.
    pub c_prime: f64,
    /// `(|s|, ray sign, ‖û‖_{H²} / (‖u₀‖·bound(|s|)))` over the verification
    /// band.
    pub ratios: Vec<(f64, f64, f64)>,
    pub max_ratio: f64,
    pub holds: bool,
}

/// `Σ_{k,ℓ} |s|^{α_k+α_ℓ−1} + Σ_k |s|^{α_k−1}`.
pub fn resolvent_bound(alphas: &[f64], modulus: f64) -> f64 {
    let mut b = 0.0;
    for a in alphas {
        b += modulus.powf(a - 1.0);
        for c in alphas {
            b += modulus.powf(a + c - 1.0);
        }
    }
    b
}

/// Ratios `‖û(s)‖_{H²} / (‖u₀‖·bound(|s|))` for `|s|` log-spaced over
/// `[r_lo, r_hi]` on both rays of `contour`.
pub fn resolvent_ratios(
    spec: &ProblemSpec,
    contour: &SectorContour,
    (r_lo, r_hi): (f64, f64),
    per_decade: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    contour.check(&spec.orders)?;
    if !(r_lo > 0.0 && r_hi > r_lo) || per_decade == 0 {
        return Err(Error::invalid("resolvent sweep needs 0 < r_lo < r_hi and a positive density"));
    }
    let sys = LaplaceSystem::new(spec)?;
    if sys.u0_norm == 0.0 {
        return Err(Error::invalid("resolvent sweep needs nonzero initial data"));
    }
    let points = ((r_hi / r_lo).log10() * per_decade as f64).ceil() as usize + 1;
    let mut out = Vec::with_capacity(2 * points);
    for r in log_times(r_lo, r_hi, points) {
        for sign in [1.0, -1.0] {
            let s = Complex64::from_polar(r, sign * contour.theta);
            let (x, _, _) = sys.solve_flat(s)?;
            let ratio = sys.h2_norm_complex(&x) / (sys.u0_norm * resolvent_bound(&sys.alphas, r));
            out.push((r, sign, ratio));
        }
    }
    Ok(out)
}

/// Calibrates `C′` on `calib` and checks the bound over the wider `verify`
/// band.
pub fn resolvent_check(
    spec: &ProblemSpec,
    contour: &SectorContour,
    calib: (f64, f64),
    verify: (f64, f64),
    per_decade: usize,
) -> Result<ResolventCheck> {
    let cal = resolvent_ratios(spec, contour, calib, per_decade)?;
    let c_prime = 2.0 * cal.iter().map(|x| x.2).fold(0.0, f64::max);
    let ratios = resolvent_ratios(spec, contour, verify, per_decade)?;
    let max_ratio = ratios.iter().map(|x| x.2).fold(0.0, f64::max);
    Ok(ResolventCheck {
        c_prime,
        ratios,
        max_ratio,
        holds: max_ratio.is_finite() && max_ratio <= c_prime,
    })
}

/// Log-log fit of the `H²` norm at large times.
#[derive(Clone, Debug)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// Smallest order, the predicted rate when `u₀^{(K)} ≢ 0`.
    pub alpha_k: f64,
    /// Whether the last component of the initial data is nonzero, which is
    /// what makes `t^{−α_K}` the sharp rate.
    pub sharp_applicable: bool,
}

impl DecayFit {
    /// CSV with columns `t,norm,fitted_slope`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "norm", "fitted_slope"])?;
        for (t, v) in self.times.iter().zip(&self.norms) {
            w.write_record(&[format!("{t:e}"), format!("{v:e}"), format!("{:e}", self.slope)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` log-spaced times over `[t0, t1]`.
pub fn log_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t0];
    }
    (0..count)
        .map(|i| t0 * (t1 / t0).powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Least-squares slope of `log ‖u(t)‖_{H²}` against `log t`.
pub fn decay_rate(spec: &ProblemSpec, times: &[f64], contour: &SectorContour) -> Result<DecayFit> {
    let report = validate_negative_semidefinite(&spec.coupling)?;
    if !report.holds {
        return Err(Error::Precondition(format!(
            "coupling matrix is not negative semidefinite (eigenvalue {:e} at node {})",
            report.worst_eigenvalue, report.worst_node
        )));
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData("decay fit needs at least two times".into()));
    }
    contour.check(&spec.orders)?;
    let sys = LaplaceSystem::new(spec)?;
    let vals = sys.invert(times, contour)?;
    let norms: Vec<f64> = vals.iter().map(|v| sys.h2_norm(&v.u)).collect();
    if norms.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Numeric("solution norm vanished; no decay rate to fit".into()));
    }
    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    let last = spec.u0.last().unwrap();
    Ok(DecayFit {
        slope,
        intercept,
        times: times.to_vec(),
        norms,
        alpha_k: spec.orders.smallest(),
        sharp_applicable: last.iter().any(|v| *v != 0.0),
    })
}

/// Continuation of sampled data beyond the last sample `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailModel {
    /// `f(t) = 0` for `t > N`.
    Zero,
    /// `f(t) = f(N) e^{−κ(t−N)}`.
    Exponential { rate: f64 },
    /// `f(t) = f(N) (t/N)^{−p}`, `p ≥ 0`.
    Power { exponent: f64 },
}

impl TailModel {
    /// Picks the better of an exponential and a power-law fit to the samples
    /// with `t ≥ from`, by residual of the log-linear regressions.
    pub fn fit(times: &[f64], values: &[f64], from: f64) -> Result<TailModel> {
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(values)
            .filter(|(t, v)| **t >= from && **t > 0.0 && **v > 0.0)
            .map(|(t, v)| (*t, v.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::InsufficientData(
                "tail fit needs three positive samples in the tail window".into(),
            ));
        }
        let ly: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let sse = |xs: &[f64]| {
            let (a, b) = linear_fit(xs, &ly);
            let r: f64 = xs.iter().zip(&ly).map(|(x, y)| (y - a * x - b).powi(2)).sum();
            (a, r)
        };
        let (ke, re) = sse(&ts);
        let (kp, rp) = sse(&lt);
        if re <= rp && ke < 0.0 {
            Ok(TailModel::Exponential { rate: -ke })
        } else if kp < 0.0 {
            Ok(TailModel::Power { exponent: -kp })
        } else {
            Err(Error::InsufficientData("tail samples are not decaying".into()))
        }
    }
}

impl TailModel {
    /// `∫_N^∞ t^{−α} f(t) e^{−st} dt` for the continuation anchored at
    /// `f(N) = f_n`.
    pub fn weighted_integral(&self, big_n: f64, f_n: f64, alpha: f64, s: f64) -> f64 {
        let e = 1.0 - alpha;
        match *self {
            TailModel::Zero => 0.0,
            TailModel::Exponential { rate } => {
                let z = s + rate;
                f_n * (rate * big_n).exp() * z.powf(alpha - 1.0) * upper_gamma(e, z * big_n)
            }
            TailModel::Power { exponent } => {
                let a = e - exponent;
                if s == 0.0 {
                    // ∫_N^∞ t^{a−1} dt converges only for a < 0
                    if a < 0.0 {
                        f_n * big_n.powf(exponent) * big_n.powf(a) / -a
                    } else {
                        f64::INFINITY
                    }
                } else {
                    f_n * big_n.powf(exponent) * s.powf(-a) * upper_gamma(a, s * big_n)
                }
            }
        }
    }
}

/// Samples of `f` on `[0, N]` together with a tail model.
#[derive(Clone, Debug)]
pub struct TailedSamples {
    /// Strictly increasing, starting at `0`.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub tail: TailModel,
}

impl TailedSamples {
    pub fn new(times: Vec<f64>, values: Vec<f64>, tail: TailModel) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::invalid("need at least two samples with matching lengths"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sample times must start at 0 and increase"));
        }
        match tail {
            TailModel::Exponential { rate } if !(rate > 0.0) => {
                return Err(Error::invalid("exponential tail needs a positive rate"))
            }
            TailModel::Power { exponent } if !(exponent >= 0.0) => {
                return Err(Error::invalid("power tail needs a non-negative exponent"))
            }
            _ => {}
        }
        Ok(TailedSamples { times, values, tail })
    }

    pub fn from_fn(f: impl Fn(f64) -> f64, horizon: f64, count: usize, tail: TailModel) -> Result<Self> {
        let times: Vec<f64> = (0..=count).map(|i| horizon * i as f64 / count as f64).collect();
        let values = times.iter().map(|t| f(*t)).collect();
        Self::new(times, values, tail)
    }

    /// `∫_0^∞ t^{−α} f(t) e^{−st} dt`: product integration against the
    /// piecewise-linear interpolant of `f e^{−st}` on the samples, plus the
    /// tail in closed form.
    pub fn weighted_transform(&self, alpha: f64, s: f64) -> f64 {
        let e = 1.0 - alpha;
        let mut head = 0.0;
        for i in 0..self.times.len() - 1 {
            let (a, b) = (self.times[i], self.times[i + 1]);
            let ga = self.values[i] * (-s * a).exp();
            let gb = self.values[i + 1] * (-s * b).exp();
            let m0 = (b.powf(e) - a.powf(e)) / e;
            let m1 = (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0);
            head += ga * m0 + (gb - ga) * (m1 - a * m0) / (b - a);
        }
        let big_n = *self.times.last().unwrap();
        let fn_ = *self.values.last().unwrap();
        head + self.tail.weighted_integral(big_n, fn_, alpha, s)
    }
}

/// `g(s) = s^{1−α_K} ∫_0^∞ t^{−α_K} f(t) e^{−st} dt`, split at the last
/// sample.
pub fn g_function(f: &TailedSamples, alpha_k: f64, s: f64) -> Result<f64> {
    if !(alpha_k > 0.0 && alpha_k < 1.0) {
        return Err(Error::invalid(format!("alpha_K = {alpha_k} must lie in (0, 1)")));
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid(format!("s = {s} must lie in (0, 1]")));
    }
    Ok(s.powf(1.0 - alpha_k) * f.weighted_transform(alpha_k, s))
}

/// Closed form of `g` for `f(t) = e^{−t}`.
pub fn g_exponential_closed_form(alpha_k: f64, s: f64) -> f64 {
    gamma(1.0 - alpha_k) * s.powf(1.0 - alpha_k) * (1.0 + s).powf(alpha_k - 1.0)
}
