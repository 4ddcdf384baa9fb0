//! Experiment configuration.
//!
//! One TOML file carries the problem definition (top-level `horizon`,
//! `orders`, `[grid]`, `[[component]]`, `[coupling]`) and one optional table
//! per command.  Command tables reject unknown keys.

use std::path::{Path, PathBuf};

use fracdiff::system::{ProblemFile, ProblemSpec};
use fracdiff::{Error, Result};
use serde::Deserialize;

use crate::report::config_hash;

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub solve: SolveConfig,
    pub decay: DecayConfig,
    pub invert: InvertConfig,
    pub validate: ValidateConfig,
    pub mlf: MlfConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Picard,
    L1,
    Laplace,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub methods: Vec<MethodName>,
    /// Number of time steps `M`.
    pub steps: usize,
    /// Grading exponent; `2/α_K` when absent.
    pub grading: Option<f64>,
    pub n_modes: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Also write binary snapshots.
    pub binary: bool,
    pub theta: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            methods: vec![MethodName::Picard],
            steps: 100,
            grading: None,
            n_modes: 64,
            tol: 1e-10,
            max_iter: 100,
            binary: false,
            theta: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub theta: Option<f64>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            t_min: 10.0,
            t_max: 1e4,
            count: 31,
            theta: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertConfig {
    /// Measured trace; closed loop on the problem's own orders when absent.
    pub trace: Option<PathBuf>,
    pub x0: f64,
    pub k0: usize,
    pub truth: Option<Vec<f64>>,
    pub init: Option<Vec<f64>>,
    pub sigma: f64,
    pub t_first: f64,
    pub t_obs: f64,
    pub per_decade: usize,
    pub s_grid: Option<Vec<f64>>,
    pub max_iter: usize,
    pub restarts: usize,
    pub residual_floor: f64,
}

impl Default for InvertConfig {
    fn default() -> Self {
        InvertConfig {
            trace: None,
            x0: 0.5,
            k0: 0,
            truth: None,
            init: None,
            sigma: 0.0,
            t_first: 1e-8,
            t_obs: 1e4,
            per_decade: 20,
            s_grid: None,
            max_iter: 100,
            restarts: 4,
            residual_floor: 1e-2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Right-hand side of the maximum-principle solve, one expression in `x`
    /// per component; the initial data when absent.
    pub forcing: Option<Vec<String>>,
    /// Randomized maximum-principle trials.
    pub trials: usize,
    pub trial_nodes: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            forcing: None,
            trials: 0,
            trial_nodes: 40,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlfConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub z: Option<Vec<f64>>,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    pub count: Option<usize>,
}

impl MlfConfig {
    pub fn points(&self) -> Result<Vec<f64>> {
        match (&self.z, self.z_min, self.z_max, self.count) {
            (Some(z), None, None, None) => Ok(z.clone()),
            (None, Some(lo), Some(hi), Some(n)) if n >= 2 && lo < hi => {
                Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
            }
            (None, Some(lo), _, Some(1)) => Ok(vec![lo]),
            _ => Err(Error::Config(
                "[mlf] needs either `z = [...]` or `z_min < z_max` with `count >= 2`".into(),
            )),
        }
    }
}

/// A parsed config file with its hash and location.
pub struct Loaded {
    pub text: String,
    pub hash: String,
    pub dir: PathBuf,
    pub experiment: ExperimentConfig,
}

impl Loaded {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let experiment: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Loaded {
            hash: config_hash(&text),
            text,
            dir,
            experiment,
        };
        if let Some(p) = &loaded.experiment.invert.trace {
            let full = loaded.resolve(p);
            if !full.is_file() {
                return Err(Error::Config(format!("trace file {} not found", full.display())));
            }
        }
        Ok(loaded)
    }

    /// Relative paths are taken from the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        ProblemFile::parse(&self.text)?.build()
    }
}
