//! Picard iteration `u^{(m)} = w + Q u^{(m-1)}` in the eigenbases of the `A_k`.
//!
//! Per mode `n` of `A_k` the operator `-A_k^{-1} S_k'(t)` acts as the scalar
//! kernel `K_n(t) = t^{α-1} E_{α,α}(-λ_n t^α)`, so every convolution in `w`
//! and `Q` is a scalar product integration against `K_n` with a
//! piecewise-linear integrand.

use rayon::prelude::*;

use super::quadrature::{TriangleTable, GL3_W, GL3_X, THIN};
use super::{picard_envelope, Method, Solution, TimeGrid};
use crate::error::{Error, Result};
use crate::mlf::MlKernel;
use crate::special::gamma;
use crate::spectral::{eigensystem, resolvent_sup_constant, EigenSystem};
use crate::system::ProblemSpec;

/// Smoothness index of the norm used for the envelope check.
const ENVELOPE_GAMMA: f64 = 0.5;

/// Record of a Picard run.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardDiagnostics {
    /// `m` with `‖u^{(m+1)} - u^{(m)}‖ <= tol`.
    pub iterations: usize,
    /// `sup_j ‖(u^{(m+1)} - u^{(m)})(t_j)‖_{L²}` for `m = 0, 1, …`.
    pub increments: Vec<f64>,
    pub n_modes: usize,
    /// `γ` of the `D(A^γ)` norm used by the envelope.
    pub gamma: f64,
    pub l0: f64,
    pub c1: f64,
    /// `M = C₁ L₀ Γ(α_K(1-γ))`.
    pub m_const: f64,
    /// `C₃` calibrated on the first increment (`F ≡ 0` only).
    pub c3_cal: Option<f64>,
    /// `max_j d_m(t_j) / (‖u₀‖ envelope_m(t_j))` in the `D(A^γ)` norm.
    pub envelope_ratios: Vec<f64>,
    /// Every recorded increment with `m >= 1` lies below `C₃_cal × envelope`.
    pub envelope_dominated: Option<bool>,
}

/// Product-integration tables of `K_n(σ) = σ^{α-1} E_{α,α}(-λ_n σ^α)` for all
/// modes at once; the powers of `σ` are shared across modes.
fn modal_weights(alpha: f64, lambdas: &[f64], tgrid: &TimeGrid) -> Result<Vec<TriangleTable>> {
    let k_aa = MlKernel::new(alpha, alpha)?;
    let k_a1 = MlKernel::new(alpha, alpha + 1.0)?;
    let k_a2 = MlKernel::new(alpha, alpha + 2.0)?;
    let t = tgrid.nodes();
    let m = tgrid.m();
    // per row: σ^α at nodes, thin flags and σ^α at Gauss points
    let rows: Vec<(Vec<f64>, Vec<bool>, Vec<[f64; 3]>)> = (1..=m)
        .into_par_iter()
        .map(|j| {
            let tj = t[j];
            let sig_a: Vec<f64> = (0..=j).map(|i| (tj - t[i]).powf(alpha)).collect();
            let mut thin = vec![false; j + 1];
            let mut gauss = vec![[0.0; 3]; j + 1];
            for i in 1..=j {
                let b = tj - t[i];
                let h = t[i] - t[i - 1];
                if b > 0.0 && h <= THIN * b {
                    thin[i] = true;
                    for q in 0..3 {
                        gauss[i][q] = (b + 0.5 * h * (1.0 + GL3_X[q])).powf(alpha);
                    }
                }
            }
            (sig_a, thin, gauss)
        })
        .collect();
    let tables = lambdas
        .par_iter()
        .map(|&lam| {
            let mut w = TriangleTable::zeros(m);
            let mut phi = vec![0.0; m + 1];
            let mut psi = vec![0.0; m + 1];
            for j in 1..=m {
                let (sig_a, thin, gauss) = &rows[j - 1];
                let tj = t[j];
                for i in 0..j {
                    let need = !thin[i + 1] || (i > 0 && !thin[i]);
                    if need {
                        let sa = sig_a[i];
                        let x = lam * sa;
                        phi[i] = sa * k_a1.eval_neg(x);
                        psi[i] = (tj - t[i]) * sa * k_a2.eval_neg(x);
                    }
                }
                phi[j] = 0.0;
                psi[j] = 0.0;
                let row = w.row_mut(j);
                for i in 1..=j {
                    let a = tj - t[i - 1];
                    let b = tj - t[i];
                    let h = a - b;
                    let (a_w, b_w) = if thin[i] {
                        let (mut aw, mut bw) = (0.0, 0.0);
                        for q in 0..3 {
                            let u = b + 0.5 * h * (1.0 + GL3_X[q]);
                            let ua = gauss[i][q];
                            let kv = ua / u * k_aa.eval_neg(lam * ua) * GL3_W[q] * 0.5;
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
            w
        })
        .collect();
    Ok(tables)
}

struct Component {
    eig: EigenSystem,
    weights: Vec<TriangleTable>,
    /// `[n][j]` modal coefficients of `S(t_j) u₀`.
    free: Vec<Vec<f64>>,
    /// `[n][j]` modal coefficients of `F(t_j)`.
    forcing: Vec<Vec<f64>>,
}

fn build_component(
    spec: &ProblemSpec,
    k: usize,
    tgrid: &TimeGrid,
    n_modes: usize,
    needs_convolution: bool,
) -> Result<Component> {
    let alpha = spec.orders.alpha(k);
    let eig = eigensystem(&spec.operators[k], n_modes)?;
    let k_1 = MlKernel::new(alpha, 1.0)?;
    let t = tgrid.nodes();
    let m = tgrid.m();
    let weights = if needs_convolution {
        modal_weights(alpha, &eig.lambdas, tgrid)?
    } else {
        Vec::new()
    };
    let c0 = eig.coefficients(&spec.u0[k]);
    let free = c0
        .iter()
        .zip(&eig.lambdas)
        .map(|(&c, &lam)| t.iter().map(|&tj| c * k_1.eval_neg(lam * tj.powf(alpha))).collect())
        .collect();
    let mut forcing = vec![vec![0.0; m + 1]; n_modes];
    if !spec.source[k].is_zero() {
        let mut buf = vec![0.0; eig.grid.n_interior];
        for (j, &tj) in t.iter().enumerate() {
            spec.source[k].at_into(tj, &mut buf);
            for (n, c) in eig.coefficients(&buf).into_iter().enumerate() {
                forcing[n][j] = c;
            }
        }
    }
    Ok(Component {
        eig,
        weights,
        free,
        forcing,
    })
}

/// `(P_k u)(t)` for all `k` at one time, given the physical values `u_ℓ(t)`.
fn apply_coupling(spec: &ProblemSpec, t: f64, u: &[Vec<f64>], out: &mut [Vec<f64>], buf: &mut Vec<f64>) {
    let kk = spec.k();
    let grid = spec.grid();
    let n = grid.n_interior;
    let inv2h = 0.5 / grid.h;
    let weak = spec.coupling.weakly_coupled();
    buf.resize(n, 0.0);
    for k in 0..kk {
        out[k].iter_mut().for_each(|v| *v = 0.0);
        for l in 0..kk {
            let c = spec.coupling.c_at(k, l);
            if !c.is_zero() {
                c.at_into(t, buf);
                for x in 0..n {
                    out[k][x] += buf[x] * u[l][x];
                }
            }
            if !weak {
                let b = spec.coupling.b_at(k, l);
                if !b.is_zero() {
                    b.at_into(t, buf);
                    for x in 0..n {
                        let right = if x + 1 < n { u[l][x + 1] } else { 0.0 };
                        let left = if x > 0 { u[l][x - 1] } else { 0.0 };
                        out[k][x] += buf[x] * (right - left) * inv2h;
                    }
                }
            }
        }
    }
}

pub fn picard_solve(
    spec: &ProblemSpec,
    tgrid: &TimeGrid,
    n_modes: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol = {tol} must be positive")));
    }
    let kk = spec.k();
    let grid = spec.grid().clone();
    let n = grid.n_interior;
    let m = tgrid.m();
    let t = tgrid.nodes();
    let coupled = spec.coupling.b.iter().chain(&spec.coupling.c).any(|f| !f.is_zero());
    let comps: Vec<Component> = (0..kk)
        .map(|k| build_component(spec, k, tgrid, n_modes, coupled || !spec.source[k].is_zero()))
        .collect::<Result<_>>()?;

    // envelope constants
    let g = ENVELOPE_GAMMA;
    let alphas = spec.orders.as_slice();
    let mut c1: f64 = 0.0;
    for &a in alphas {
        c1 = c1
            .max(resolvent_sup_constant(a, 1.0, g)?)
            .max(resolvent_sup_constant(a, a, g)?);
    }
    let l0 = spec.coupling.l0();
    let m_const = c1 * l0 * gamma(spec.orders.smallest() * (1.0 - g));
    let betas = spec.orders.betas(g);
    let shift = spec.orders.largest() * g;
    let u0_norm = spec
        .u0
        .iter()
        .map(|u| grid.norm(u).powi(2))
        .sum::<f64>()
        .sqrt();
    let track_envelope = !spec.has_source() && u0_norm > 0.0;

    // iterate state: [k][n][j]
    let mut cur: Vec<Vec<Vec<f64>>> = comps.iter().map(|c| vec![vec![0.0; m + 1]; c.eig.n_modes]).collect();
    let mut next = cur.clone();
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut c3_cal = None;
    let mut phys = vec![vec![vec![0.0; n]; kk]; m + 1];
    let mut pu = vec![vec![0.0; n]; kk];
    let mut buf = Vec::new();
    let mut g_coef: Vec<Vec<Vec<f64>>> = cur.clone();
    let mut iterations = None;

    for iter in 0..=max_iter {
        // g = F + P u^{(iter)} in each modal basis
        for (k, comp) in comps.iter().enumerate() {
            for (nm, row) in g_coef[k].iter_mut().enumerate() {
                row.copy_from_slice(&comp.forcing[nm]);
            }
        }
        if coupled && iter > 0 {
            for j in 0..=m {
                for (l, comp) in comps.iter().enumerate() {
                    let p = &mut phys[j][l];
                    p.iter_mut().for_each(|v| *v = 0.0);
                    for (nm, phi) in comp.eig.phis.iter().enumerate() {
                        let c = cur[l][nm][j];
                        if c != 0.0 {
                            for (o, f) in p.iter_mut().zip(phi) {
                                *o += c * f;
                            }
                        }
                    }
                }
                apply_coupling(spec, t[j], &phys[j], &mut pu, &mut buf);
                for (k, comp) in comps.iter().enumerate() {
                    for (nm, phi) in comp.eig.phis.iter().enumerate() {
                        g_coef[k][nm][j] += grid.inner(&pu[k], phi);
                    }
                }
            }
        }
        // u^{(iter+1)} = S u₀ + ∫ K (F + P u^{(iter)})
        for (k, comp) in comps.iter().enumerate() {
            if comp.weights.is_empty() {
                for nm in 0..comp.eig.n_modes {
                    next[k][nm].copy_from_slice(&comp.free[nm]);
                }
                continue;
            }
            for nm in 0..comp.eig.n_modes {
                let w = &comp.weights[nm];
                let gv = &g_coef[k][nm];
                let out = &mut next[k][nm];
                for j in 0..=m {
                    out[j] = comp.free[nm][j] + w.dot_row(j, gv);
                }
            }
        }
        // increments
        let mut sup_l2: f64 = 0.0;
        let mut ratio: f64 = 0.0;
        let mut d0_ratio: f64 = 0.0;
        for j in 0..=m {
            let (mut s2, mut sg) = (0.0, 0.0);
            for (k, comp) in comps.iter().enumerate() {
                for nm in 0..comp.eig.n_modes {
                    let d = next[k][nm][j] - cur[k][nm][j];
                    s2 += d * d;
                    sg += comp.eig.lambdas[nm].powf(2.0 * g) * d * d;
                }
            }
            sup_l2 = sup_l2.max(s2.sqrt());
            if track_envelope && j > 0 {
                let env = picard_envelope(iter, m_const, &betas, shift, t[j])?;
                let r = sg.sqrt() / (u0_norm * env);
                if r.is_finite() {
                    if iter == 0 {
                        d0_ratio = d0_ratio.max(r);
                    } else {
                        ratio = ratio.max(r);
                    }
                }
            }
        }
        if track_envelope {
            if iter == 0 {
                c3_cal = Some(d0_ratio);
                ratios.push(d0_ratio);
            } else {
                ratios.push(ratio);
            }
        }
        increments.push(sup_l2);
        std::mem::swap(&mut cur, &mut next);
        if !sup_l2.is_finite() {
            return Err(Error::Numeric(format!("Picard iterate {iter} is not finite")));
        }
        if sup_l2 <= tol {
            iterations = Some(iter);
            break;
        }
    }

    let envelope_at_t = |mm: usize| -> f64 {
        match c3_cal {
            Some(c3) => picard_envelope(mm, m_const, &betas, shift, tgrid.horizon())
                .map(|e| c3 * u0_norm * e)
                .unwrap_or(f64::NAN),
            None => f64::NAN,
        }
    };
    let Some(iterations) = iterations else {
        let envelope = if c3_cal.is_some() {
            (0..increments.len()).map(envelope_at_t).collect()
        } else {
            Vec::new()
        };
        return Err(Error::NonConvergence {
            iterations: max_iter,
            last: *increments.last().unwrap_or(&f64::NAN),
            history: increments,
            envelope,
        });
    };

    let envelope_dominated = c3_cal.map(|c3| {
        ratios
            .iter()
            .skip(1)
            .all(|r| *r <= c3 * (1.0 + 1e-9) + 1e-300)
    });
    let mut sol = Solution::zeros(grid, tgrid.clone(), alphas.to_vec(), Method::Picard);
    for (k, comp) in comps.iter().enumerate() {
        let mut coeffs = vec![0.0; comp.eig.n_modes];
        for j in 0..=m {
            for (nm, c) in coeffs.iter_mut().enumerate() {
                *c = cur[k][nm][j];
            }
            sol.at_mut(k, j).copy_from_slice(&comp.eig.synthesize(&coeffs));
        }
    }
    sol.n_modes = Some(n_modes);
    sol.picard = Some(PicardDiagnostics {
        iterations,
        increments,
        n_modes,
        gamma: g,
        l0,
        c1,
        m_const,
        c3_cal,
        envelope_ratios: ratios,
        envelope_dominated,
    });
    Ok(sol)
}
