//! Mittag-Leffler functions.
//!
//! `E_{α,β}(z) = Σ_m z^m / Γ(αm+β)` is evaluated on the real axis by one of
//! three routes:
//!
//! * the power series, for `z > 0` and for small `|z|`;
//! * the asymptotic expansion `-Σ z^{-m}/Γ(β-αm)` plus the exponential pole
//!   contributions, once `|z|^{1/α}` is large;
//! * otherwise the inverse-Laplace integral
//!   `(1/2πi)∫ e^s s^{α-β}/(s^α - z) ds` along a parabolic contour
//!   `s(u) = μ(1+iu)²`, discretised by the trapezoidal rule, with residues of
//!   poles lying outside the parabola added back.
//!
//! [`MlKernel`] is a cached evaluator of `x ↦ E_{α,β}(-x)` for `x >= 0` used
//! in the hot loops of the solvers.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{ln_gamma, rgamma};

/// Largest `ln` that still fits in an `f64`.
const LN_MAX: f64 = 709.78;
/// Series is used for negative arguments up to this modulus.
const SERIES_RADIUS: f64 = 1.0;
/// Asymptotic regime starts where `|z|^{1/α}` exceeds this value.
const ASYMPTOTIC_SCALE: f64 = 40.0;

/// Parameters of the two-parameter Mittag-Leffler function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MLParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MLParams {
    /// `0 < alpha <= 2`, `beta > 0`.  The endpoint `alpha = 2` is admitted so
    /// that `E_{2,1}(-z²) = cos z` can be evaluated.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = MLParams { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "alpha = {} outside (0, 2]",
                self.alpha
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta = {} must be positive", self.beta)));
        }
        Ok(())
    }
}

/// `E_{α,β}(z)` for real `z`.
pub fn ml(params: MLParams, z: f64) -> Result<f64> {
    params.validate()?;
    if !z.is_finite() {
        return Err(Error::invalid(format!("z = {z} is not finite")));
    }
    let MLParams { alpha, beta } = params;
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    if z > 0.0 {
        let p = z.powf(1.0 / alpha);
        let log_size = p + (1.0 - beta) / alpha * z.ln() - alpha.ln();
        if log_size > LN_MAX {
            return Err(Error::Overflow {
                what: format!("E_{{{alpha},{beta}}}({z})"),
                threshold: overflow_threshold(alpha, beta),
            });
        }
        let v = series_positive(alpha, beta, z);
        if !v.is_finite() {
            return Err(Error::Overflow {
                what: format!("E_{{{alpha},{beta}}}({z})"),
                threshold: overflow_threshold(alpha, beta),
            });
        }
        return Ok(v);
    }
    let x = -z;
    if x <= SERIES_RADIUS {
        return Ok(series(alpha, beta, z));
    }
    if x.powf(1.0 / alpha) >= ASYMPTOTIC_SCALE {
        if let Some(v) = asymptotic_negative(alpha, beta, z) {
            return Ok(v);
        }
    }
    Ok(contour(alpha, beta, z))
}

/// The smallest positive `z` for which `E_{α,β}(z)` leaves the `f64` range
/// (located by bisection on the leading-order growth).
pub fn overflow_threshold(alpha: f64, beta: f64) -> f64 {
    let g = |z: f64| z.powf(1.0 / alpha) + (1.0 - beta) / alpha * z.ln() - alpha.ln() - LN_MAX;
    let (mut lo, mut hi) = (1e-6_f64, 1.0_f64);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Plain power series; accurate where no severe cancellation occurs.
fn series(alpha: f64, beta: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    let mut zm = 1.0;
    let mut small = 0;
    for m in 0..2000 {
        let term = zm * rgamma(alpha * m as f64 + beta);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
        zm *= z;
    }
    sum
}

/// Series for `z > 0` with terms built in log space so that large `z`
/// neither overflows nor loses the summation order.
fn series_positive(alpha: f64, beta: f64, z: f64) -> f64 {
    let lz = z.ln();
    let p = z.powf(1.0 / alpha);
    let m_peak = ((p - beta) / alpha).max(0.0);
    // the terms are log-concave in m; sum outward from the peak
    let log_term = |m: f64| m * lz - ln_gamma(alpha * m + beta);
    let peak = m_peak.floor() as i64;
    let lpeak = log_term(peak as f64).max(log_term(peak as f64 + 1.0));
    let scale = lpeak;
    let mut sum = 0.0;
    let mut m = peak;
    while m >= 0 {
        let t = (log_term(m as f64) - scale).exp();
        sum += t;
        if t < 1e-18 * sum {
            break;
        }
        m -= 1;
    }
    let mut m = peak + 1;
    loop {
        let t = (log_term(m as f64) - scale).exp();
        sum += t;
        if t < 1e-18 * sum {
            break;
        }
        m += 1;
    }
    sum * scale.exp()
}

/// Asymptotic expansion for large negative `z`, truncated at the smallest
/// term.  Returns `None` if the optimal truncation is not accurate enough.
fn asymptotic_negative(alpha: f64, beta: f64, z: f64) -> Option<f64> {
    let lx = (-z).ln();
    let inv = 1.0 / z;
    let mut sum = 0.0_f64;
    let mut zm = 1.0;
    let mut last_env = f64::INFINITY;
    for m in 1..2000 {
        zm *= inv;
        // |1/Γ(β-αm)| <= Γ(1-β+αm)/π; truncate on this envelope since the
        // terms themselves dip near the poles of Γ
        let env = (ln_gamma(1.0 - beta + alpha * m as f64) - m as f64 * lx).exp()
            / std::f64::consts::PI;
        if env > last_env {
            return if last_env <= 1e-15 * sum.abs() {
                Some(sum + pole_terms(alpha, beta, z))
            } else {
                None
            };
        }
        sum += -zm * rgamma(beta - alpha * m as f64);
        last_env = env;
        if env <= 1e-17 * sum.abs() {
            return Some(sum + pole_terms(alpha, beta, z));
        }
    }
    None
}

/// Poles of `s^{α-β}/(s^α - z)` on the principal sheet.
fn poles(alpha: f64, z: f64) -> Vec<Complex64> {
    let r = z.abs().powf(1.0 / alpha);
    let arg = if z < 0.0 { std::f64::consts::PI } else { 0.0 };
    let mut out = Vec::new();
    for j in -3i32..=3 {
        let th = (arg + 2.0 * std::f64::consts::PI * j as f64) / alpha;
        if th > -std::f64::consts::PI && th <= std::f64::consts::PI {
            out.push(Complex64::from_polar(r, th));
        }
    }
    out
}

fn residue(alpha: f64, beta: f64, p: Complex64) -> Complex64 {
    p.powf(1.0 - beta) * p.exp() / alpha
}

fn pole_terms(alpha: f64, beta: f64, z: f64) -> f64 {
    poles(alpha, z)
        .into_iter()
        .map(|p| residue(alpha, beta, p).re)
        .sum()
}

/// Trapezoidal rule on the parabola `μ(1+iu)²`.
fn contour(alpha: f64, beta: f64, z: f64) -> f64 {
    let ps = poles(alpha, z);
    // signed distance of each pole from the contour in the u-plane:
    // positive inside the parabola, negative outside
    let dist = |mu: f64, p: Complex64| 1.0 - (p / mu).sqrt().re;
    let mut best_mu = 8.0;
    let mut best_gap = f64::NEG_INFINITY;
    for &mu in &[8.0, 6.0, 10.0, 4.0, 12.0, 3.0, 2.0, 1.5, 1.0] {
        let gap = ps.iter().map(|&p| dist(mu, p).abs()).fold(1.0_f64, f64::min);
        if gap >= 0.3 {
            best_mu = mu;
            break;
        }
        if gap > best_gap {
            best_gap = gap;
            best_mu = mu;
        }
    }
    let mu = best_mu;
    let mut c_up: f64 = 1.0;
    let mut c_dn: f64 = 1.0;
    let mut outside = Vec::new();
    for &p in &ps {
        let d = dist(mu, p);
        if d > 0.0 {
            c_up = c_up.min(d);
        } else {
            c_dn = c_dn.min(-d);
            outside.push(p);
        }
    }
    let tol = 37.0_f64;
    let h_up = 2.0 * std::f64::consts::PI * c_up / tol;
    let h_dn = 2.0 * std::f64::consts::PI * c_dn / (tol + mu * (1.0 + c_dn).powi(2));
    let h = h_up.min(h_dn);
    let n = ((1.0 + tol / mu).sqrt() / h).ceil() as usize;
    let n = n.min(4000);

    let f = |s: Complex64| -> Complex64 {
        let sa = s.powf(alpha);
        s.exp() * s.powf(alpha - beta) / (sa - z)
    };
    // conjugate symmetry: g(-u) = -conj(g(u))
    let mut acc = mu * f(Complex64::new(mu, 0.0)).re;
    for k in 1..=n {
        let u = k as f64 * h;
        let w = Complex64::new(1.0, u);
        let s = mu * w * w;
        let ds = Complex64::new(0.0, 2.0 * mu) * w;
        acc += (f(s) * ds).im;
    }
    let mut val = acc * h / std::f64::consts::PI;
    for p in outside {
        val += residue(alpha, beta, p).re;
    }
    val
}

/// Checks `0 < |E_{α,β}(z)| <= c0 (1+z)^{(1-β)/α} exp(z^{1/α})` for `z > 0`.
pub fn ml_bound_holds(params: MLParams, z: f64, c0: f64) -> Result<bool> {
    params.validate()?;
    if !(z > 0.0) {
        return Err(Error::invalid(format!("bound is stated for z > 0, got {z}")));
    }
    if !(c0 > 0.0) {
        return Err(Error::invalid(format!("c0 = {c0} must be positive")));
    }
    let MLParams { alpha, beta } = params;
    // compare in log space so that large z does not overflow
    let log_rhs = c0.ln() + (1.0 - beta) / alpha * (1.0 + z).ln() + z.powf(1.0 / alpha);
    let e = match ml(params, z) {
        Ok(v) => v,
        Err(Error::Overflow { .. }) => {
            let log_e = z.powf(1.0 / alpha) + (1.0 - beta) / alpha * z.ln() - alpha.ln();
            return Ok(log_e <= log_rhs);
        }
        Err(e) => return Err(e),
    };
    if e == 0.0 {
        return Ok(false);
    }
    Ok(e.abs().ln() <= log_rhs)
}

/// Ratio `|E_{α,β}(z)| / ((1+z)^{(1-β)/α} exp(z^{1/α}))`, the smallest
/// admissible `c0` at a single point.
pub fn ml_bound_ratio(params: MLParams, z: f64) -> Result<f64> {
    let MLParams { alpha, beta } = params;
    let log_den = (1.0 - beta) / alpha * (1.0 + z).ln() + z.powf(1.0 / alpha);
    match ml(params, z) {
        Ok(v) => Ok(v.abs() * (-log_den).exp()),
        Err(Error::Overflow { .. }) => {
            let log_e = z.powf(1.0 / alpha) + (1.0 - beta) / alpha * z.ln() - alpha.ln();
            Ok((log_e - log_den).exp())
        }
        Err(e) => Err(e),
    }
}

/// Parameters of the multinomial Mittag-Leffler function.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiMLParams {
    pub betas: Vec<f64>,
    pub beta0: f64,
}

impl MultiMLParams {
    pub fn new(betas: Vec<f64>, beta0: f64) -> Result<Self> {
        let p = MultiMLParams { betas, beta0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::invalid("multinomial Mittag-Leffler needs K >= 1"));
        }
        if self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::invalid("all betas must be positive"));
        }
        if !self.beta0.is_finite() {
            return Err(Error::invalid("beta0 must be finite"));
        }
        Ok(())
    }
}

/// One layer `|j| = ℓ` of the multinomial expansion, as pairs of multi-index
/// and coefficient `ℓ!/(j₁!…j_K!) Π z_k^{j_k}`.
#[derive(Clone, Debug)]
pub struct MultiIndexLayer {
    pub ell: usize,
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl MultiIndexLayer {
    pub fn origin(k: usize) -> Self {
        MultiIndexLayer {
            ell: 0,
            entries: vec![(vec![0; k], 1.0)],
        }
    }

    /// `c_{ℓ+1}(j) = Σ_k z_k c_ℓ(j - e_k)`.
    pub fn next(&self, zs: &[f64]) -> Self {
        let k = zs.len();
        let mut map: std::collections::BTreeMap<Vec<usize>, f64> = Default::default();
        for (j, c) in &self.entries {
            for (i, &zi) in zs.iter().enumerate().take(k) {
                let mut jj = j.clone();
                jj[i] += 1;
                *map.entry(jj).or_insert(0.0) += c * zi;
            }
        }
        MultiIndexLayer {
            ell: self.ell + 1,
            entries: map.into_iter().collect(),
        }
    }
}

/// Layer sum `Σ_{|j|=ℓ} c_ℓ(j) / Γ(β₀ + β·j)`.
pub fn layer_sum(layer: &MultiIndexLayer, betas: &[f64], beta0: f64) -> f64 {
    layer
        .entries
        .iter()
        .map(|(j, c)| {
            let arg = beta0 + j.iter().zip(betas).map(|(&ji, &b)| ji as f64 * b).sum::<f64>();
            c * rgamma(arg)
        })
        .sum()
}

/// `E_{β,β₀}(z₁,…,z_K)` summed layer by layer in the total degree.
pub fn multinomial_ml(params: &MultiMLParams, zs: &[f64]) -> Result<f64> {
    params.validate()?;
    if zs.len() != params.betas.len() {
        return Err(Error::invalid(format!(
            "expected {} arguments, got {}",
            params.betas.len(),
            zs.len()
        )));
    }
    if zs.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("arguments must be finite"));
    }
    let mut layer = MultiIndexLayer::origin(zs.len());
    let mut total = layer_sum(&layer, &params.betas, params.beta0);
    let mut quiet = 0;
    let mut prev_mag = f64::INFINITY;
    let mut growing = 0usize;
    for _ in 1..=10_000 {
        layer = layer.next(zs);
        let s = layer_sum(&layer, &params.betas, params.beta0);
        // the layer may cancel internally; test on the absolute layer size
        let mag: f64 = layer
            .entries
            .iter()
            .map(|(j, c)| {
                let arg = params.beta0
                    + j.iter().zip(&params.betas).map(|(&ji, &b)| ji as f64 * b).sum::<f64>();
                (c * rgamma(arg)).abs()
            })
            .sum();
        total += s;
        if !total.is_finite() {
            return Err(Error::Overflow {
                what: "multinomial Mittag-Leffler series".into(),
                threshold: f64::MAX,
            });
        }
        if mag <= 1e-16 * total.abs().max(1e-300) {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        if mag > prev_mag {
            growing += 1;
        } else {
            growing = 0;
        }
        prev_mag = mag;
        // prune negligible coefficients so that layers stay small
        let cut = 1e-300;
        layer.entries.retain(|(_, c)| c.abs() > cut);
        if layer.entries.is_empty() {
            return Ok(total);
        }
    }
    Err(Error::NonConvergence {
        iterations: 10_000,
        last: prev_mag,
        history: vec![growing as f64],
        envelope: Vec::new(),
    })
}

/// Fast evaluator of `x ↦ E_{α,β}(-x)` on `x >= 0` for fixed parameters with
/// `0 < α <= 1`: Horner series near zero, asymptotic series far out and
/// piecewise Chebyshev interpolation of the contour integral in between.
#[derive(Clone, Debug)]
pub struct MlKernel {
    alpha: f64,
    beta: f64,
    series: Vec<f64>,
    asym: Vec<f64>,
    /// Envelope `Γ(1-β+αm)` of the `m`-th asymptotic term.
    asym_env: Vec<f64>,
    x_asym: f64,
    pieces: Vec<ChebPiece>,
    ln_lo: f64,
    ln_step: f64,
}

#[derive(Clone, Debug)]
struct ChebPiece {
    a: f64,
    b: f64,
    coef: Vec<f64>,
}

impl ChebPiece {
    fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coef[0]
    }
}

impl MlKernel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let params = MLParams::new(alpha, beta)?;
        if alpha > 1.0 {
            return Err(Error::invalid("MlKernel supports 0 < alpha <= 1"));
        }
        let mut series = Vec::new();
        for m in 0..400 {
            let c = rgamma(alpha * m as f64 + beta);
            series.push(c);
            if m > 4 && c.abs() < 1e-18 {
                break;
            }
        }
        let x_asym = ASYMPTOTIC_SCALE.powf(alpha);
        // coefficients -(-1)^m / Γ(β - αm) of x^{-m}, truncated on the
        // envelope at the regime boundary
        let mut asym = Vec::new();
        let mut asym_env = Vec::new();
        let lx = x_asym.ln();
        let mut last_env = f64::INFINITY;
        for m in 1..2000 {
            let env = (ln_gamma(1.0 - beta + alpha * m as f64) - m as f64 * lx).exp();
            if env > last_env || env < 1e-19 {
                break;
            }
            last_env = env;
            asym.push(-(if m % 2 == 0 { 1.0 } else { -1.0 }) * rgamma(beta - alpha * m as f64));
            asym_env.push(ln_gamma(1.0 - beta + alpha * m as f64).exp());
        }
        let ln_lo = SERIES_RADIUS.ln();
        let ln_hi = x_asym.ln().max(ln_lo + 0.1);
        let n_pieces = ((ln_hi - ln_lo) / 0.25).ceil().max(1.0) as usize;
        let ln_step = (ln_hi - ln_lo) / n_pieces as f64;
        let deg = 22;
        let mut pieces = Vec::with_capacity(n_pieces);
        for i in 0..n_pieces {
            let a = (ln_lo + i as f64 * ln_step).exp();
            let b = (ln_lo + (i + 1) as f64 * ln_step).exp();
            let nodes: Vec<f64> = (0..=deg)
                .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / (deg + 1) as f64).cos())
                .collect();
            let vals: Vec<f64> = nodes
                .iter()
                .map(|&t| {
                    let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
                    ml(params, -x)
                })
                .collect::<Result<_>>()?;
            let n = deg + 1;
            let mut coef = vec![0.0; n];
            for (j, cj) in coef.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..n {
                    s += vals[k]
                        * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / n as f64).cos();
                }
                *cj = s * 2.0 / n as f64;
            }
            coef[0] *= 0.5;
            pieces.push(ChebPiece { a, b, coef });
        }
        Ok(MlKernel {
            alpha,
            beta,
            series,
            asym,
            asym_env,
            x_asym,
            pieces,
            ln_lo,
            ln_step,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E_{α,β}(-x)` for `x >= 0`.
    #[inline]
    pub fn eval_neg(&self, x: f64) -> f64 {
        if x <= SERIES_RADIUS {
            let mut acc = 0.0;
            for &c in self.series.iter().rev() {
                acc = acc * (-x) + c;
            }
            return acc;
        }
        if x >= self.x_asym {
            // forward sum, stopping once the envelope is below the
            // smallest possible leading behaviour ~ x^{-2}
            let inv = 1.0 / x;
            let floor = 1e-18 * inv * inv;
            let mut p = inv;
            let mut acc = 0.0;
            for (c, e) in self.asym.iter().zip(&self.asym_env) {
                acc += c * p;
                if e * p < floor {
                    break;
                }
                p *= inv;
            }
            return acc;
        }
        let idx = ((x.ln() - self.ln_lo) / self.ln_step) as usize;
        let idx = idx.min(self.pieces.len() - 1);
        self.pieces[idx].eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64) -> MLParams {
        MLParams::new(a, b).unwrap()
    }

    #[test]
    fn exponential_and_cosine() {
        for &z in &[-20.0, -3.0, -0.5, 0.3, 1.0, 5.0] {
            let e = ml(p(1.0, 1.0), z).unwrap();
            assert!((e - z.exp()).abs() <= 1e-12 * z.exp().max(1.0), "z={z}");
        }
        for &x in &[0.1, 1.0, 2.0, 4.0, 7.0] {
            let c = ml(p(2.0, 1.0), -x * x).unwrap();
            assert!((c - f64::cos(x)).abs() < 1e-12, "x={x} {c}");
        }
    }

    #[test]
    fn zero_argument() {
        let v = ml(p(0.7, 2.5), 0.0).unwrap();
        assert!((v - rgamma(2.5)).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        match ml(p(0.3, 1.0), 20.0) {
            Err(Error::Overflow { threshold, .. }) => assert!(threshold > 7.0 && threshold < 7.3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MLParams::new(0.0, 1.0).is_err());
        assert!(MLParams::new(2.5, 1.0).is_err());
        assert!(MLParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn kernel_matches_direct_evaluation() {
        for &(a, b) in &[(0.5, 1.0), (0.3, 0.3), (0.8, 1.8), (0.99, 2.99)] {
            let k = MlKernel::new(a, b).unwrap();
            for i in 0..400 {
                let x = 1e-3 * 1.04f64.powi(i);
                let d = ml(p(a, b), -x).unwrap();
                let f = k.eval_neg(x);
                assert!((d - f).abs() < 1e-12, "a={a} b={b} x={x} {d} {f}");
            }
        }
    }
}
