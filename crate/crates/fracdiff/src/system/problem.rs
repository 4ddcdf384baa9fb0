//! Human-readable problem files (TOML).
//!
//! ```toml
//! horizon = 1.0
//! orders = [0.8, 0.5]
//!
//! [grid]
//! a = 0.0
//! b = 1.0
//! n_interior = 200
//!
//! [[component]]
//! diffusion = "1"
//! u0 = "sqrt(2)*sin(pi*x)"
//! source = "0"
//!
//! [[component]]
//! u0 = "sqrt(2)*sin(pi*x)"
//!
//! [coupling]
//! c = [["-2", "1"], ["1", "-2"]]
//! ```
//!
//! Coefficient entries are expressions in `x` and `t` (see [`super::expr`]);
//! plain numbers are accepted too.  Unknown top-level tables are ignored so the
//! same file can carry command sections for the CLI.

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{CouplingCoeffs, OrderVector, ProblemSpec, SampledField};
use crate::error::{Error, Result};
use crate::spectral::{EllipticOperator1D, Grid1D};

/// Default number of uniform time samples for `t`-dependent coefficients.
pub const DEFAULT_TIME_SAMPLES: usize = 257;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprText {
    Number(f64),
    Text(String),
}

impl ExprText {
    pub fn parse(&self) -> Result<Expr> {
        match self {
            ExprText::Number(v) if *v < 0.0 => Ok(Expr::Neg(Box::new(Expr::Num(-v)))),
            ExprText::Number(v) => Ok(Expr::Num(*v)),
            ExprText::Text(s) => Expr::parse(s),
        }
    }

    fn canonical(&self) -> Result<ExprText> {
        Ok(ExprText::Text(self.parse()?.to_string()))
    }
}

impl From<&str> for ExprText {
    fn from(s: &str) -> Self {
        ExprText::Text(s.to_string())
    }
}

fn one() -> ExprText {
    ExprText::Text("1".into())
}

fn zero() -> ExprText {
    ExprText::Text("0".into())
}

fn default_time_samples() -> usize {
    DEFAULT_TIME_SAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub a: f64,
    pub b: f64,
    pub n_interior: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSection {
    #[serde(default = "one")]
    pub diffusion: ExprText,
    pub u0: ExprText,
    #[serde(default = "zero")]
    pub source: ExprText,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<ExprText>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<ExprText>>>,
    #[serde(default = "default_time_samples")]
    pub time_samples: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        CouplingSection {
            c: None,
            b: None,
            time_samples: DEFAULT_TIME_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub horizon: f64,
    pub orders: Vec<f64>,
    pub grid: GridSection,
    #[serde(rename = "component")]
    pub components: Vec<ComponentSection>,
    #[serde(default)]
    pub coupling: CouplingSection,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let pf: ProblemFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("problem file: {e}")))?;
        pf.check_expressions()?;
        Ok(pf)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn all_exprs(&self) -> Vec<&ExprText> {
        let mut v: Vec<&ExprText> = Vec::new();
        for c in &self.components {
            v.push(&c.diffusion);
            v.push(&c.u0);
            v.push(&c.source);
        }
        for m in [&self.coupling.c, &self.coupling.b].into_iter().flatten() {
            v.extend(m.iter().flatten());
        }
        v
    }

    fn check_expressions(&self) -> Result<()> {
        for e in self.all_exprs() {
            e.parse().map_err(|err| Error::Config(format!("expression {e:?}: {err}")))?;
        }
        Ok(())
    }

    /// Same file with every expression re-printed in canonical form.
    pub fn canonicalize(&self) -> Result<Self> {
        let mut out = self.clone();
        for c in &mut out.components {
            c.diffusion = c.diffusion.canonical()?;
            c.u0 = c.u0.canonical()?;
            c.source = c.source.canonical()?;
        }
        for m in [&mut out.coupling.c, &mut out.coupling.b].into_iter().flatten() {
            for row in m.iter_mut() {
                for e in row.iter_mut() {
                    *e = e.canonical()?;
                }
            }
        }
        Ok(out)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serialise problem: {e}")))
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let k = self.orders.len();
        if self.components.len() != k {
            return Err(Error::Config(format!(
                "{} orders but {} [[component]] tables",
                k,
                self.components.len()
            )));
        }
        let orders = OrderVector::new(self.orders.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let grid = Grid1D::new(self.grid.a, self.grid.b, self.grid.n_interior)
            .map_err(|e| Error::Config(e.to_string()))?;
        let n = grid.n_interior;
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let ts = self.coupling.time_samples.max(2);
        let times: Vec<f64> = (0..ts)
            .map(|i| self.horizon * i as f64 / (ts - 1) as f64)
            .collect();
        let sample = |e: &ExprText| -> Result<SampledField> {
            let ex = e.parse()?;
            if ex.depends_on_t() {
                Ok(SampledField::from_fn(&grid, &times, |x, t| ex.eval(x, t)))
            } else {
                Ok(SampledField::constant_in_time(grid.sample(|x| ex.eval(x, 0.0))))
            }
        };
        let mut operators = Vec::with_capacity(k);
        let mut u0 = Vec::with_capacity(k);
        let mut source = Vec::with_capacity(k);
        for (i, c) in self.components.iter().enumerate() {
            let a = c.diffusion.parse()?;
            if a.depends_on_t() {
                return Err(Error::Config(format!(
                    "component {}: the diffusion coefficient must not depend on t",
                    i + 1
                )));
            }
            let op = EllipticOperator1D::from_fn(grid.clone(), |x| a.eval(x, 0.0))
                .map_err(|e| Error::Config(format!("component {}: {e}", i + 1)))?;
            operators.push(op);
            let e0 = c.u0.parse()?;
            u0.push(grid.sample(|x| e0.eval(x, 0.0)));
            source.push(sample(&c.source)?);
        }
        let matrix = |m: &Option<Vec<Vec<ExprText>>>, what: &str| -> Result<Vec<SampledField>> {
            match m {
                None => Ok((0..k * k).map(|_| SampledField::zeros(n)).collect()),
                Some(rows) => {
                    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                        return Err(Error::Config(format!("coupling.{what} must be {k}x{k}")));
                    }
                    rows.iter().flatten().map(sample).collect()
                }
            }
        };
        let coupling = CouplingCoeffs::new(
            k,
            matrix(&self.coupling.b, "b")?,
            matrix(&self.coupling.c, "c")?,
        )?;
        ProblemSpec::new(orders, operators, coupling, source, u0, self.horizon)
            .map_err(|e| Error::Config(e.to_string()))
    }
}
