//! Order identification from a single-point trace, the auxiliary function
//! `w(s)` with its limit `w₀`, and the maximum principle for the stationary
//! coupled system
//!
//! ```text
//! (A − C) w = F
//! ```
//!
//! The fit compares Laplace transforms: the trace transform at real `s`
//! against `û_{k₀}(x₀; s; α)` from the Laplace-domain solver.

use std::io::{BufRead, Write};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::Normal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laplace::{LaplaceSystem, SectorContour, TailModel};
use crate::linalg::{BlockTridiag, DenseLu};
use crate::spectral::{assemble, EllipticOperator1D, Grid1D};
use crate::system::{
    validate_cooperative, validate_negative_semidefinite, CouplingCoeffs, OrderVector, ProblemSpec,
    SampledField, NONNEG_TOL, NONZERO_TOL,
};

/// Orders closer than this count as equal when forming `D`.
pub const TIE_TOL: f64 = 1e-12;
/// Without a tail model a transform is rejected above this tail fraction.
pub const MAX_TAIL_FRACTION: f64 = 0.1;
/// Relative residual above which a stationary solve is rejected.
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

// ---------------------------------------------------------------- traces

/// Samples of `u_{k₀}(x₀, t)` on `[0, T_obs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTrace {
    pub x0: f64,
    /// Interior node index of `x0`.
    pub node: usize,
    /// Component index, 0-based.
    pub k0: usize,
    /// Ascending, starting at `0`.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ObservationTrace {
    pub fn new(x0: f64, node: usize, k0: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::invalid("trace needs at least two samples with matching lengths"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trace times must start at 0 and increase"));
        }
        if values.iter().any(|v| !v.is_finite()) || !x0.is_finite() {
            return Err(Error::invalid("trace values must be finite"));
        }
        Ok(ObservationTrace {
            x0,
            node,
            k0,
            times,
            values,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Checks `x0` against an interior node of `grid` and `k0 < k`.
    pub fn check_against(&self, grid: &Grid1D, k: usize) -> Result<()> {
        if self.node >= grid.n_interior {
            return Err(Error::invalid(format!("node {} is not interior", self.node)));
        }
        if (grid.node(self.node) - self.x0).abs() > 1e-9 * (grid.b_end - grid.a_end) {
            return Err(Error::invalid(format!(
                "x0 = {} does not match node {} at {}",
                self.x0,
                self.node,
                grid.node(self.node)
            )));
        }
        if self.k0 >= k {
            return Err(Error::invalid(format!("component {} out of range for K = {k}", self.k0)));
        }
        Ok(())
    }

    /// Power law `t^{−p}` fitted on the last decade of samples.
    pub fn power_tail(&self) -> Result<TailModel> {
        let from = self.horizon() / 10.0;
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, v)| **t >= from && **t > 0.0 && **v > 0.0)
            .map(|(t, v)| (t.ln(), v.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::InsufficientData(
                "power tail needs three positive samples in the last decade".into(),
            ));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, _) = crate::solver::linear_fit(&xs, &ys);
        if !(slope < 0.0) {
            return Err(Error::InsufficientData(format!("trace tail is not decaying (slope {slope})")));
        }
        Ok(TailModel::Power { exponent: -slope })
    }

    /// Same trace with independent `N(0, σ²)` noise on every sample after
    /// `t = 0`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::invalid("noise level must be non-negative"));
        }
        let mut out = self.clone();
        if sigma == 0.0 {
            return Ok(out);
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = StdRng::seed_from_u64(seed);
        for v in out.values.iter_mut().skip(1) {
            *v += rng.sample(normal);
        }
        Ok(out)
    }

    /// CSV with a `# x0=… node=… k0=…` line followed by `t,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# x0={:?} node={} k0={}", self.x0, self.node, self.k0)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([format!("{t:?}"), format!("{v:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let meta = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Config("trace CSV must start with a '# x0=… node=… k0=…' line".into()))?;
        let (mut x0, mut node, mut k0) = (None, None, None);
        for item in meta.split_whitespace() {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad trace header item {item:?}")))?;
            let bad = |_| Error::Config(format!("bad value in trace header item {item:?}"));
            match key {
                "x0" => x0 = Some(val.parse::<f64>().map_err(|_| Error::Config(format!("bad x0 {val:?}")))?),
                "node" => node = Some(val.parse::<usize>().map_err(bad)?),
                "k0" => k0 = Some(val.parse::<usize>().map_err(bad)?),
                _ => return Err(Error::Config(format!("unknown trace header key {key:?}"))),
            }
        }
        let missing = |what: &str| Error::Config(format!("trace header lacks {what}"));
        let mut rdr = csv::Reader::from_reader(input);
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad trace row {:?}", rec)))
            };
            times.push(num(0)?);
            values.push(num(1)?);
        }
        ObservationTrace::new(
            x0.ok_or_else(|| missing("x0"))?,
            node.ok_or_else(|| missing("node"))?,
            k0.ok_or_else(|| missing("k0"))?,
            times,
            values,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }
}

/// `0` followed by `per_decade` log-spaced times per decade on `[t_first, horizon]`.
pub fn observation_times(t_first: f64, horizon: f64, per_decade: usize) -> Vec<f64> {
    let decades = (horizon / t_first).log10();
    let count = (decades * per_decade as f64).ceil().max(1.0) as usize;
    let mut out = vec![0.0];
    out.extend((0..=count).map(|i| t_first * 10f64.powf(decades * i as f64 / count as f64)));
    *out.last_mut().unwrap() = horizon;
    out
}

/// Trace of component `k0` at interior node `node` by contour inversion.
pub fn synthetic_trace(
    spec: &ProblemSpec,
    node: usize,
    k0: usize,
    times: &[f64],
    contour: &SectorContour,
) -> Result<ObservationTrace> {
    if times.first() != Some(&0.0) {
        return Err(Error::invalid("observation times must start at 0"));
    }
    if node >= spec.grid().n_interior || k0 >= spec.k() {
        return Err(Error::invalid("observation node or component out of range"));
    }
    let sys = LaplaceSystem::new(spec)?;
    let vals = sys.invert(&times[1..], contour)?;
    let mut values = vec![spec.u0[k0][node]];
    values.extend(vals.iter().map(|v| v.u[k0][node]));
    ObservationTrace::new(spec.grid().node(node), node, k0, times.to_vec(), values)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceTransform {
    pub value: f64,
    /// Share of `|value|` contributed beyond the last sample.
    pub tail_fraction: f64,
}

// (1 − e^{−x}) / x and (1 − e^{−x} − x e^{−x}) / x²
fn phi1(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

fn phi2(x: f64) -> f64 {
    if x < 0.1 {
        // Σ (−x)^n (n+1)/(n+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for n in 1..12 {
            term *= -x / (n as f64 + 2.0);
            sum += term * (n as f64 + 1.0);
        }
        sum
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (x * x)
    }
}

/// `∫_0^∞ f(t) e^{−st} dt` with `f` piecewise linear between samples, plus the
/// tail model beyond the last sample.  Without a model the remainder is
/// estimated by holding the last value and must stay below
/// [`MAX_TAIL_FRACTION`].
pub fn trace_laplace(trace: &ObservationTrace, s: f64, tail: Option<TailModel>) -> Result<TraceTransform> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("s = {s} must be positive")));
    }
    let mut head = 0.0;
    for i in 0..trace.times.len() - 1 {
        let (a, b) = (trace.times[i], trace.times[i + 1]);
        let (fa, fb) = (trace.values[i], trace.values[i + 1]);
        let h = b - a;
        let x = s * h;
        let ea = (-s * a).exp();
        head += ea * h * (fa * phi1(x) + (fb - fa) * phi2(x));
    }
    let big_n = trace.horizon();
    let f_n = *trace.values.last().unwrap();
    let (tail_value, diag) = match tail {
        Some(m) => {
            let v = m.weighted_integral(big_n, f_n, 0.0, s);
            (v, v)
        }
        None => (0.0, f_n * (-s * big_n).exp() / s),
    };
    let value = head + tail_value;
    let tail_fraction = if value != 0.0 {
        diag.abs() / value.abs()
    } else if diag == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    if tail.is_none() && tail_fraction > MAX_TAIL_FRACTION {
        return Err(Error::InsufficientData(format!(
            "transform at s = {s}: {:.1}% of the value lies beyond T_obs = {big_n} and no tail model was given",
            100.0 * tail_fraction
        )));
    }
    Ok(TraceTransform { value, tail_fraction })
}

// ---------------------------------------------------------------- fitting

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub s_grid: Vec<f64>,
    pub max_iter: usize,
    /// Extra random starts tried when the first fit stays above the floor.
    pub restarts: usize,
    /// Acceptable RMS relative misfit.
    pub residual_floor: f64,
    pub seed: u64,
    /// Bounds applied to every order.
    pub bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            s_grid: default_s_grid(),
            max_iter: 100,
            restarts: 4,
            residual_floor: 1e-2,
            seed: 1,
            bounds: (1e-3, 1.0 - 1e-3),
        }
    }
}

/// 12 log-spaced points on `[10⁻³, 1]`.
pub fn default_s_grid() -> Vec<f64> {
    (0..12).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 11.0)).collect()
}

#[derive(Clone, Debug)]
pub struct OrderFitResult {
    /// Fitted orders in component order; may violate `α₁ >= … >= α_K`.
    pub alpha_hat: Vec<f64>,
    pub ordering_violated: bool,
    /// RMS relative misfit over the s-grid.
    pub residual: f64,
    pub s_grid: Vec<f64>,
    pub iterations: usize,
    pub starts: usize,
    /// `σ̂² (JᵀJ)^{-1}`, row-major `K×K`.
    pub covariance: Vec<f64>,
}

impl OrderFitResult {
    pub fn orders(&self) -> Result<OrderVector> {
        OrderVector::new(self.alpha_hat.clone())
    }
}

/// Misfit between the forward model and transformed data at one observation
/// point.
#[derive(Clone, Debug)]
pub struct FitObjective {
    system: LaplaceSystem,
    node: usize,
    k0: usize,
    s_grid: Vec<f64>,
    data: Vec<f64>,
}

impl FitObjective {
    pub fn new(spec_known: &ProblemSpec, node: usize, k0: usize, s_grid: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        let system = LaplaceSystem::new(spec_known)?;
        let k = system.k();
        if node >= system.grid().n_interior || k0 >= k {
            return Err(Error::invalid("observation node or component out of range"));
        }
        if s_grid.len() != data.len() || s_grid.len() < 3 * k {
            return Err(Error::invalid(format!(
                "need at least {} s-values with matching data, got {}",
                3 * k,
                s_grid.len()
            )));
        }
        if s_grid.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::invalid("s-grid must lie in (0, 1]"));
        }
        if data.iter().any(|d| !(d.is_finite() && *d != 0.0)) {
            return Err(Error::invalid("transformed data must be finite and nonzero"));
        }
        Ok(FitObjective {
            system,
            node,
            k0,
            s_grid,
            data,
        })
    }

    pub fn model(&self, alphas: &[f64]) -> Result<Vec<f64>> {
        let sys = self.system.with_alphas(alphas)?;
        self.s_grid
            .par_iter()
            .map(|s| Ok(sys.solve_real(*s)?[self.k0][self.node]))
            .collect()
    }

    /// Relative residuals `(model − data) / data`.
    pub fn residuals(&self, alphas: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .model(alphas)?
            .iter()
            .zip(&self.data)
            .map(|(m, d)| (m - d) / d)
            .collect())
    }

    /// RMS relative misfit.
    pub fn misfit(&self, alphas: &[f64]) -> Result<f64> {
        let r = self.residuals(alphas)?;
        Ok((r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt())
    }

    pub fn k(&self) -> usize {
        self.system.k()
    }
}

struct LmOutcome {
    p: Vec<f64>,
    cost: f64,
    iterations: usize,
    jtj: Vec<f64>,
}

fn jacobian(obj: &FitObjective, p: &[f64], r0: &[f64], bounds: (f64, f64)) -> Result<Vec<f64>> {
    let k = p.len();
    let m = r0.len();
    let mut jac = vec![0.0; m * k];
    for c in 0..k {
        let h = 1e-6;
        let (lo, hi) = ((p[c] - h).max(bounds.0), (p[c] + h).min(bounds.1));
        let mut pl = p.to_vec();
        let mut ph = p.to_vec();
        pl[c] = lo;
        ph[c] = hi;
        let rl = obj.residuals(&pl)?;
        let rh = obj.residuals(&ph)?;
        for i in 0..m {
            jac[i * k + c] = (rh[i] - rl[i]) / (hi - lo);
        }
    }
    Ok(jac)
}

fn normal_matrix(jac: &[f64], m: usize, k: usize) -> Vec<f64> {
    let mut jtj = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            jtj[a * k + b] = (0..m).map(|i| jac[i * k + a] * jac[i * k + b]).sum();
        }
    }
    jtj
}

fn levenberg_marquardt(obj: &FitObjective, start: &[f64], opts: &FitOptions) -> Result<LmOutcome> {
    let k = start.len();
    let clamp = |v: f64| v.clamp(opts.bounds.0, opts.bounds.1);
    let mut p: Vec<f64> = start.iter().map(|v| clamp(*v)).collect();
    let mut r = obj.residuals(&p)?;
    let m = r.len();
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut jac = jacobian(obj, &p, &r, opts.bounds)?;
    while iterations < opts.max_iter && cost > 1e-30 {
        iterations += 1;
        let jtj = normal_matrix(&jac, m, k);
        let grad: Vec<f64> = (0..k).map(|a| (0..m).map(|i| jac[i * k + a] * r[i]).sum()).collect();
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[d * k + d] += mu * jtj[d * k + d].max(1e-12);
            }
            let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
            match DenseLu::factor(k, &a) {
                Ok(lu) => lu.solve_in_place(&mut step),
                Err(_) => {
                    mu *= 10.0;
                    continue;
                }
            }
            let trial: Vec<f64> = p.iter().zip(&step).map(|(v, d)| clamp(v + d)).collect();
            let rt = obj.residuals(&trial)?;
            let ct: f64 = rt.iter().map(|v| v * v).sum();
            if ct < cost {
                let moved = trial.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                p = trial;
                r = rt;
                let rel = (cost - ct) / cost;
                cost = ct;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if moved < 1e-12 || rel < 1e-14 {
                    return Ok(LmOutcome {
                        jtj: normal_matrix(&jacobian(obj, &p, &r, opts.bounds)?, m, k),
                        p,
                        cost,
                        iterations,
                    });
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
        jac = jacobian(obj, &p, &r, opts.bounds)?;
    }
    Ok(LmOutcome {
        jtj: normal_matrix(&jac, m, k),
        p,
        cost,
        iterations,
    })
}

fn covariance(jtj: &[f64], k: usize, cost: f64, m: usize) -> Vec<f64> {
    let dof = (m.saturating_sub(k)).max(1) as f64;
    let sigma2 = cost / dof;
    match DenseLu::factor(k, jtj) {
        Ok(lu) => {
            let mut inv = vec![0.0; k * k];
            for i in 0..k {
                inv[i * k + i] = 1.0;
            }
            // columns of the identity solved one at a time
            let mut out = vec![0.0; k * k];
            for c in 0..k {
                let mut col: Vec<f64> = (0..k).map(|r| inv[r * k + c]).collect();
                lu.solve_in_place(&mut col);
                for r in 0..k {
                    out[r * k + c] = sigma2 * col[r];
                }
            }
            out
        }
        Err(_) => vec![f64::INFINITY; k * k],
    }
}

/// Bounded Levenberg–Marquardt on an assembled objective, with random
/// restarts while the misfit stays above `opts.residual_floor`.
pub fn fit_objective(obj: &FitObjective, alpha_init: &[f64], opts: &FitOptions) -> Result<OrderFitResult> {
    let k = obj.k();
    if alpha_init.len() != k {
        return Err(Error::invalid("initial orders have the wrong length"));
    }
    let m = obj.s_grid.len();
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut best = levenberg_marquardt(obj, alpha_init, opts)?;
    let mut total_iter = best.iterations;
    let mut starts = 1;
    let rms = |c: f64| (c / m as f64).sqrt();
    while rms(best.cost) > opts.residual_floor && starts <= opts.restarts {
        let mut start: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.95)).collect();
        start.sort_by(|a, b| b.total_cmp(a));
        let out = levenberg_marquardt(obj, &start, opts)?;
        total_iter += out.iterations;
        starts += 1;
        if out.cost < best.cost {
            best = out;
        }
    }
    let residual = rms(best.cost);
    if residual > opts.residual_floor {
        return Err(Error::NonConvergence {
            iterations: total_iter,
            last: residual,
            history: vec![],
            envelope: vec![],
        });
    }
    let ordering_violated = best.p.windows(2).any(|w| w[1] > w[0]);
    Ok(OrderFitResult {
        covariance: covariance(&best.jtj, k, best.cost, m),
        alpha_hat: best.p,
        ordering_violated,
        residual,
        s_grid: obj.s_grid.clone(),
        iterations: total_iter,
        starts,
    })
}

/// Fits all orders of `spec_known` to the trace.  The orders stored in
/// `spec_known` are ignored.  A power tail fitted on the last decade is used
/// whenever `s T_obs < 20` somewhere on the grid.
pub fn fit_orders(
    trace: &ObservationTrace,
    spec_known: &ProblemSpec,
    alpha_init: &OrderVector,
    opts: &FitOptions,
) -> Result<OrderFitResult> {
    let coop = validate_cooperative(&spec_known.coupling)?;
    if !(coop.weak && coop.row_sums_nonpositive) {
        return Err(Error::Precondition(
            "order fit needs a cooperative coupling with nonpositive row sums".into(),
        ));
    }
    trace.check_against(spec_known.grid(), spec_known.k())?;
    let s_min = opts.s_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = if s_min * trace.horizon() < 20.0 {
        Some(trace.power_tail()?)
    } else {
        None
    };
    let data = opts
        .s_grid
        .iter()
        .map(|s| trace_laplace(trace, *s, tail).map(|t| t.value))
        .collect::<Result<Vec<_>>>()?;
    let obj = FitObjective::new(spec_known, trace.node, trace.k0, opts.s_grid.clone(), data)?;
    fit_objective(&obj, alpha_init.as_slice(), opts)
}

// ---------------------------------------------------------------- stationary systems

/// Solves `(A + diag(shift) − C) w = rhs` with homogeneous Dirichlet data.
fn stationary_solve(
    operators: &[EllipticOperator1D],
    coupling: &CouplingCoeffs,
    shift: &[f64],
    rhs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let k = operators.len();
    let n = operators[0].grid.n_interior;
    let stencils = operators.iter().map(assemble).collect::<Result<Vec<_>>>()?;
    let mut sys = BlockTridiag::<f64>::zeros(k, n);
    let mut b = vec![0.0; n * k];
    for i in 0..n {
        let c = coupling.c_matrix(i, 0.0);
        for r in 0..k {
            let d = sys.idx(i, r, r);
            sys.diag[d] += stencils[r].diag[i] + shift[r];
            if i > 0 {
                sys.lower[d] += stencils[r].off[i - 1];
            }
            if i + 1 < n {
                sys.upper[d] += stencils[r].off[i];
            }
            for col in 0..k {
                let e = sys.idx(i, r, col);
                sys.diag[e] -= c[r * k + col];
            }
            b[i * k + r] = rhs[r][i];
        }
    }
    let (x, pivot) = sys
        .solve(&b)
        .map_err(|e| Error::Numeric(format!("stationary system singular: {e}")))?;
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn > 0.0 {
        let res = sys
            .matvec(&x)
            .iter()
            .zip(&b)
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            .sqrt()
            / bn;
        if !(res <= STATIONARY_RESIDUAL_TOL) {
            return Err(Error::Numeric(format!(
                "stationary residual {res:e} (pivot ratio {pivot:e})"
            )));
        }
    }
    Ok((0..k).map(|c| (0..n).map(|i| x[i * k + c]).collect()).collect())
}

fn require_static(spec: &ProblemSpec) -> Result<()> {
    if !spec.coupling.weakly_coupled() || !spec.coupling.time_independent() {
        return Err(Error::Precondition(
            "needs a weakly coupled system with time-independent coefficients".into(),
        ));
    }
    Ok(())
}

/// `(A − C) w₀ = D u₀` for a 0/1 diagonal `D`.
pub fn solve_w0(spec: &ProblemSpec, d: &[f64]) -> Result<Vec<Vec<f64>>> {
    require_static(spec)?;
    let coop = validate_cooperative(&spec.coupling)?;
    if !(coop.weak && coop.row_sums_nonpositive) {
        return Err(Error::Precondition(
            "w₀ needs a cooperative coupling with nonpositive row sums".into(),
        ));
    }
    if d.len() != spec.k() || d.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::invalid("D must be a 0/1 diagonal of length K"));
    }
    let rhs: Vec<Vec<f64>> = spec
        .u0
        .iter()
        .zip(d)
        .map(|(u, dk)| u.iter().map(|v| dk * v).collect())
        .collect();
    stationary_solve(&spec.operators, &spec.coupling, &vec![0.0; spec.k()], &rhs)
}

/// Index split of two distinct order vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSplit {
    /// 0-based index of the smallest order at which the vectors differ.
    pub k1: usize,
    /// True if the vectors were exchanged so that `α_{k₁} < β_{k₁}`.
    pub swapped: bool,
    /// Diagonal of `D`.
    pub d: Vec<f64>,
    /// Indices `k < k₁` with `α_k = α_{k₁}`.
    pub ties: Vec<usize>,
    /// Indices `k < k₁` with `α_k ≠ α_{k₁}`.
    pub others: Vec<usize>,
}

pub fn order_split(alpha: &OrderVector, beta: &OrderVector) -> Result<OrderSplit> {
    let (a, b) = (alpha.as_slice(), beta.as_slice());
    if a.len() != b.len() {
        return Err(Error::invalid("order vectors have different lengths"));
    }
    let k1 = (0..a.len())
        .rev()
        .find(|k| (a[*k] - b[*k]).abs() > TIE_TOL)
        .ok_or_else(|| Error::invalid("order vectors coincide"))?;
    let swapped = a[k1] > b[k1];
    let lo = if swapped { b } else { a };
    let ties: Vec<usize> = (0..k1).filter(|k| (lo[*k] - lo[k1]).abs() <= TIE_TOL).collect();
    let others: Vec<usize> = (0..k1).filter(|k| !ties.contains(k)).collect();
    let mut d = vec![0.0; a.len()];
    d[k1] = 1.0;
    for k in &ties {
        d[*k] = 1.0;
    }
    Ok(OrderSplit {
        k1,
        swapped,
        d,
        ties,
        others,
    })
}

#[derive(Clone, Debug)]
pub struct WitnessReport {
    pub split: OrderSplit,
    pub s_values: Vec<f64>,
    /// `w_k(x₀; s)` per s-value.
    pub w_at_x0: Vec<Vec<f64>>,
    /// `‖w(s) − w₀‖` summed in `L²` over the components, per s-value.
    pub w_distance: Vec<f64>,
    /// `û_{k₀}(x₀; s) − v̂_{k₀}(x₀; s)` per s-value (after any swap).
    pub trace_gap: Vec<f64>,
    pub w0: Vec<Vec<f64>>,
    pub w0_positive: bool,
    /// Every component of `w(x₀; s)` is positive at the smallest s.
    pub w_positive_at_x0: bool,
    pub positive: bool,
}

/// Forms `w(s) = s (û − v̂)(s) / (s^{α_{k₁}} − s^{β_{k₁}})` for two order
/// vectors on the same problem and compares it with `w₀`.
pub fn uniqueness_witness(
    spec: &ProblemSpec,
    alpha: &OrderVector,
    beta: &OrderVector,
    node: usize,
    k0: usize,
    s_values: &[f64],
) -> Result<WitnessReport> {
    require_static(spec)?;
    let coop = validate_cooperative(&spec.coupling)?;
    if !(coop.strict && coop.row_sums_nonpositive) {
        return Err(Error::Precondition(
            "witness needs strictly cooperative coupling with nonpositive row sums".into(),
        ));
    }
    for (k, u) in spec.u0.iter().enumerate() {
        let mn = u.iter().copied().fold(f64::INFINITY, f64::min);
        let mx = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mn < -NONNEG_TOL || mx < NONZERO_TOL {
            return Err(Error::Precondition(format!("u0[{k}] must be >= 0 and not identically 0")));
        }
    }
    if node >= spec.grid().n_interior || k0 >= spec.k() {
        return Err(Error::invalid("observation node or component out of range"));
    }
    if s_values.is_empty() || s_values.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
        return Err(Error::invalid("s-values must lie in (0, 1)"));
    }
    let split = order_split(alpha, beta)?;
    let (lo, hi) = if split.swapped { (beta, alpha) } else { (alpha, beta) };
    let sys_u = LaplaceSystem::new(&spec.with_orders(lo.clone())?)?;
    let sys_v = LaplaceSystem::new(&spec.with_orders(hi.clone())?)?;
    let w0 = solve_w0(spec, &split.d)?;
    let grid = spec.grid();
    let (a1, b1) = (lo.alpha(split.k1), hi.alpha(split.k1));
    let mut w_at_x0: Vec<Vec<f64>> = Vec::new();
    let mut w_distance = Vec::new();
    let mut trace_gap = Vec::new();
    for s in s_values {
        let u = sys_u.solve_real(*s)?;
        let v = sys_v.solve_real(*s)?;
        let scale = s / (s.powf(a1) - s.powf(b1));
        let w: Vec<Vec<f64>> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| scale * (x - y)).collect())
            .collect();
        w_at_x0.push(w.iter().map(|c| c[node]).collect());
        let dist = w
            .iter()
            .zip(&w0)
            .map(|(a, b)| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                grid.norm(&d).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        w_distance.push(dist);
        trace_gap.push(u[k0][node] - v[k0][node]);
    }
    let w0_positive = w0.iter().flatten().all(|v| *v > 0.0);
    let i_min = (0..s_values.len())
        .min_by(|a, b| s_values[*a].total_cmp(&s_values[*b]))
        .unwrap();
    let w_positive_at_x0 = w_at_x0[i_min].iter().all(|v| *v > 0.0);
    Ok(WitnessReport {
        positive: w0_positive && w_positive_at_x0,
        split,
        s_values: s_values.to_vec(),
        w_at_x0,
        w_distance,
        trace_gap,
        w0,
        w0_positive,
        w_positive_at_x0,
    })
}

// ---------------------------------------------------------------- maximum principle

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaximumPrincipleCase {
    /// Strict cooperativity, row sums `<= 0`, `F >= 0` and one component `≢ 0`.
    StrictCooperative,
    /// Weak cooperativity, row sums `<= 0`, every component of `F` `>= 0, ≢ 0`.
    WeakCooperative,
    /// `K = 2`, strict cooperativity and negative semidefinite `C` in place
    /// of the row-sum condition; positivity is reported, not asserted.
    SemidefinitePair,
    NotApplicable,
}

#[derive(Clone, Debug)]
pub struct MaximumPrincipleVerdict {
    pub case: MaximumPrincipleCase,
    /// Smallest interior value per component, when the system could be solved.
    pub min_interior: Option<Vec<f64>>,
    /// Every interior value of every component is positive.
    pub positive: Option<bool>,
    /// The hypotheses of a positivity result hold and positivity was observed.
    pub confirmed: bool,
}

/// Classifies the hypotheses, solves `(A − C) w = F` and checks strict
/// interior positivity.  The solve is also done when no result applies so the
/// report shows which components stay positive.
pub fn maximum_principle_check(spec: &ProblemSpec, f: &[Vec<f64>]) -> Result<MaximumPrincipleVerdict> {
    require_static(spec)?;
    let k = spec.k();
    let n = spec.grid().n_interior;
    if f.len() != k || f.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("F must have K components on the grid"));
    }
    let coop = validate_cooperative(&spec.coupling)?;
    let nonneg = f.iter().all(|v| v.iter().all(|x| *x >= -NONNEG_TOL));
    let nonzero: Vec<bool> = f.iter().map(|v| v.iter().any(|x| *x >= NONZERO_TOL)).collect();
    let case = if coop.strict && coop.row_sums_nonpositive && nonneg && nonzero.iter().any(|b| *b) {
        MaximumPrincipleCase::StrictCooperative
    } else if coop.weak && coop.row_sums_nonpositive && nonneg && nonzero.iter().all(|b| *b) {
        MaximumPrincipleCase::WeakCooperative
    } else if k == 2
        && coop.strict
        && nonneg
        && nonzero.iter().any(|b| *b)
        && validate_negative_semidefinite(&spec.coupling)?.holds
    {
        MaximumPrincipleCase::SemidefinitePair
    } else {
        MaximumPrincipleCase::NotApplicable
    };
    let w = stationary_solve(&spec.operators, &spec.coupling, &vec![0.0; k], f).ok();
    let min_interior: Option<Vec<f64>> =
        w.map(|w| w.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect());
    let positive = min_interior.as_ref().map(|m| m.iter().all(|v| *v > 0.0));
    let confirmed = matches!(
        case,
        MaximumPrincipleCase::StrictCooperative | MaximumPrincipleCase::WeakCooperative
    ) && positive == Some(true);
    Ok(MaximumPrincipleVerdict {
        case,
        min_interior,
        positive,
        confirmed,
    })
}

#[derive(Clone, Debug)]
pub struct TrialSummary {
    pub trials: usize,
    pub confirmed: usize,
    /// Smallest interior value seen over all trials.
    pub worst_min: f64,
    /// Indices of trials that were not confirmed.
    pub failures: Vec<usize>,
}

/// Random strictly cooperative problem with nonpositive row sums and a
/// source satisfying the strict-cooperative hypotheses.
pub fn random_cooperative_case(rng: &mut StdRng, n: usize) -> Result<(ProblemSpec, Vec<Vec<f64>>)> {
    let k = rng.random_range(2..=3usize);
    let grid = Grid1D::new(0.0, 1.0, n)?;
    let ops = (0..k)
        .map(|_| {
            let (a0, a1, ph) = (rng.random_range(0.2..2.0), rng.random_range(0.0..0.9), rng.random_range(0.0..6.3));
            EllipticOperator1D::from_fn(grid.clone(), move |x| a0 * (1.0 + a1 * (6.0 * x + ph).sin()))
        })
        .collect::<Result<Vec<_>>>()?;
    // off-diagonal entries: constant, or a nonnegative bump that vanishes on part of the domain
    let mut c = vec![vec![0.0; n]; k * k];
    for r in 0..k {
        for col in 0..k {
            if r == col {
                continue;
            }
            let amp = rng.random_range(0.05..5.0);
            let (freq, ph) = (rng.random_range(1.0..4.0), rng.random_range(0.0..6.3));
            let bump = rng.random_bool(0.5);
            c[r * k + col] = grid.sample(|x| {
                if bump {
                    amp * (freq * std::f64::consts::PI * x + ph).sin().max(0.0)
                } else {
                    amp
                }
            });
        }
    }
    for r in 0..k {
        let slack = rng.random_range(0.0..3.0);
        let diag: Vec<f64> = (0..n)
            .map(|i| -(0..k).filter(|col| *col != r).map(|col| c[r * k + col][i]).sum::<f64>() - slack)
            .collect();
        c[r * k + r] = diag;
    }
    let coupling = CouplingCoeffs::new(
        k,
        (0..k * k).map(|_| SampledField::zeros(n)).collect(),
        c.into_iter().map(SampledField::constant_in_time).collect(),
    )?;
    let k_src = rng.random_range(0..k);
    let f: Vec<Vec<f64>> = (0..k)
        .map(|comp| {
            let active = comp == k_src || rng.random_bool(0.3);
            if !active {
                return vec![0.0; n];
            }
            let (amp, c0, w) = (rng.random_range(0.1..10.0), rng.random_range(0.1..0.9), rng.random_range(0.05..0.5));
            let mut v = grid.sample(|x| amp * (1.0 - ((x - c0) / w).powi(2)).max(0.0));
            if v.iter().all(|x| *x < NONZERO_TOL) {
                // bump narrower than the mesh: put it on the nearest node
                let i = ((c0 - grid.a_end) / grid.h).round().clamp(1.0, n as f64) as usize - 1;
                v[i] = amp;
            }
            v
        })
        .collect();
    let spec = ProblemSpec::new(
        OrderVector::new(vec![0.5; k])?,
        ops,
        coupling,
        (0..k).map(|_| SampledField::zeros(n)).collect(),
        (0..k).map(|_| vec![0.0; n]).collect(),
        1.0,
    )?;
    Ok((spec, f))
}

/// Runs [`maximum_principle_check`] on `trials` random strictly cooperative
/// cases.
pub fn maximum_principle_trials(trials: usize, seed: u64, n: usize) -> Result<TrialSummary> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut confirmed = 0;
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for t in 0..trials {
        let (spec, f) = random_cooperative_case(&mut rng, n)?;
        let v = maximum_principle_check(&spec, &f)?;
        if let Some(m) = &v.min_interior {
            worst = worst.min(m.iter().copied().fold(f64::INFINITY, f64::min));
        }
        if v.case == MaximumPrincipleCase::StrictCooperative && v.confirmed {
            confirmed += 1;
        } else {
            failures.push(t);
        }
    }
    Ok(TrialSummary {
        trials,
        confirmed,
        worst_min: worst,
        failures,
    })
}
