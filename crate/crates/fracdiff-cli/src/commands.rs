//! One function per subcommand.  Each returns the text for stdout and the
//! files for the output directory; nothing is written here.

use std::fs::File;
use std::io::BufReader;

use fracdiff::inverse::{
    default_s_grid, fit_orders, maximum_principle_check, maximum_principle_trials, observation_times,
    synthetic_trace, FitOptions, MaximumPrincipleCase, ObservationTrace,
};
use fracdiff::laplace::{contour_solution, decay_rate, log_times, SectorContour};
use fracdiff::mlf::{ml, MLParams};
use fracdiff::solver::{l1_solve, encode_binary, picard_solve, write_csv, Solution, TimeGrid};
use fracdiff::system::{validate_cooperative, validate_negative_semidefinite, Expr, OrderVector, ProblemSpec};
use fracdiff::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Loaded, MethodName};

/// Result of a command before it is framed and written.
pub struct Output<T: Serialize> {
    pub result: T,
    /// Main table, printed for `--format csv`.
    pub table: String,
    /// `(file name, contents)` for the output directory.
    pub files: Vec<(String, Vec<u8>)>,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn text(bytes: Vec<u8>) -> String {
    String::from_utf8(bytes).expect("CSV writers emit UTF-8")
}

fn contour(spec: &ProblemSpec, theta: Option<f64>) -> Result<SectorContour> {
    match theta {
        Some(t) => SectorContour::new(t, 0.0, spec.orders.largest()).map_err(config_err),
        None => Ok(SectorContour::default_for(&spec.orders)),
    }
}

// ---------------------------------------------------------------- solve

#[derive(Serialize)]
pub struct PicardSummary {
    iterations: usize,
    increments: Vec<f64>,
    n_modes: usize,
    gamma: f64,
    m_const: f64,
    c3_cal: Option<f64>,
    envelope_ratios: Vec<f64>,
    envelope_dominated: Option<bool>,
}

#[derive(Serialize)]
pub struct MethodSummary {
    method: &'static str,
    l2_norm: f64,
    final_norm: f64,
    picard: Option<PicardSummary>,
}

#[derive(Serialize)]
pub struct Difference {
    a: &'static str,
    b: &'static str,
    l2_difference: f64,
    max_difference: f64,
}

#[derive(Serialize)]
pub struct SolveResult {
    horizon: f64,
    steps: usize,
    grading: f64,
    n_interior: usize,
    orders: Vec<f64>,
    methods: Vec<MethodSummary>,
    differences: Vec<Difference>,
}

pub fn solve(cfg: &Loaded) -> Result<Output<SolveResult>> {
    let spec = cfg.problem()?;
    let sc = &cfg.experiment.solve;
    if sc.methods.is_empty() {
        return Err(Error::Config("[solve] methods is empty".into()));
    }
    let tgrid = match sc.grading {
        Some(r) => TimeGrid::graded(spec.horizon, sc.steps, r),
        None => TimeGrid::for_spec(&spec, sc.steps),
    }
    .map_err(config_err)?;

    let mut sols: Vec<Solution> = Vec::new();
    for m in &sc.methods {
        let sol = match m {
            MethodName::Picard => picard_solve(&spec, &tgrid, sc.n_modes, sc.tol, sc.max_iter)?,
            MethodName::L1 => l1_solve(&spec, &tgrid)?,
            MethodName::Laplace => contour_solution(&spec, &tgrid, &contour(&spec, sc.theta)?)?,
        };
        sols.push(sol);
    }

    let methods = sols
        .iter()
        .map(|s| MethodSummary {
            method: s.method.as_str(),
            l2_norm: s.space_time_norm(),
            final_norm: s.norm_at(tgrid.m()),
            picard: s.picard.as_ref().map(|d| PicardSummary {
                iterations: d.iterations,
                increments: d.increments.clone(),
                n_modes: d.n_modes,
                gamma: d.gamma,
                m_const: d.m_const,
                c3_cal: d.c3_cal,
                envelope_ratios: d.envelope_ratios.clone(),
                envelope_dominated: d.envelope_dominated,
            }),
        })
        .collect();
    let mut differences = Vec::new();
    for i in 0..sols.len() {
        for j in (i + 1)..sols.len() {
            differences.push(Difference {
                a: sols[i].method.as_str(),
                b: sols[j].method.as_str(),
                l2_difference: sols[i].distance(&sols[j])?,
                max_difference: sols[i].max_distance(&sols[j])?,
            });
        }
    }

    let mut files = Vec::new();
    for s in &sols {
        files.push((format!("solution_{}.csv", s.method.as_str()), csv_bytes(|b| write_csv(s, b))?));
        if sc.binary {
            files.push((format!("solution_{}.bin", s.method.as_str()), encode_binary(s)));
        }
    }
    let table = text(files[0].1.clone());
    Ok(Output {
        result: SolveResult {
            horizon: spec.horizon,
            steps: tgrid.m(),
            grading: tgrid.grading(),
            n_interior: spec.grid().n_interior,
            orders: spec.orders.as_slice().to_vec(),
            methods,
            differences,
        },
        table,
        files,
    })
}

// ---------------------------------------------------------------- decay

#[derive(Serialize)]
pub struct DecayResult {
    slope: f64,
    intercept: f64,
    alpha_1: f64,
    alpha_k: f64,
    sharp_applicable: bool,
    /// `-α_K` when the last initial component is nonzero.
    predicted_slope: Option<f64>,
    deviation: Option<f64>,
    theta: f64,
    times: Vec<f64>,
    norms: Vec<f64>,
}

pub fn decay(cfg: &Loaded) -> Result<Output<DecayResult>> {
    let spec = cfg.problem()?;
    let dc = &cfg.experiment.decay;
    if !(dc.t_min > 0.0 && dc.t_max > dc.t_min && dc.count >= 2) {
        return Err(Error::Config("[decay] needs 0 < t_min < t_max and count >= 2".into()));
    }
    let c = contour(&spec, dc.theta)?;
    let times = log_times(dc.t_min, dc.t_max, dc.count);
    let fit = decay_rate(&spec, &times, &c)?;
    let predicted = fit.sharp_applicable.then_some(-fit.alpha_k);
    let csv = csv_bytes(|b| fit.write_csv(b))?;
    Ok(Output {
        result: DecayResult {
            slope: fit.slope,
            intercept: fit.intercept,
            alpha_1: spec.orders.largest(),
            alpha_k: fit.alpha_k,
            sharp_applicable: fit.sharp_applicable,
            predicted_slope: predicted,
            deviation: predicted.map(|p| fit.slope - p),
            theta: c.theta,
            times: fit.times,
            norms: fit.norms,
        },
        table: text(csv.clone()),
        files: vec![("decay.csv".into(), csv)],
    })
}

// ---------------------------------------------------------------- invert

#[derive(Serialize)]
pub struct InvertResult {
    x0: f64,
    node: usize,
    k0: usize,
    samples: usize,
    sigma: f64,
    truth: Option<Vec<f64>>,
    init: Vec<f64>,
    alpha_hat: Vec<f64>,
    delta: Option<Vec<f64>>,
    residual: f64,
    iterations: usize,
    starts: usize,
    ordering_violated: bool,
    covariance: Vec<f64>,
    s_grid: Vec<f64>,
}

/// Evenly spread descending starting orders.
fn default_init(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5];
    }
    (0..k).map(|i| 0.7 - 0.4 * i as f64 / (k - 1) as f64).collect()
}

pub fn invert(cfg: &Loaded, seed: u64) -> Result<Output<InvertResult>> {
    let spec = cfg.problem()?;
    let ic = &cfg.experiment.invert;
    let (trace, truth) = match &ic.trace {
        Some(p) => {
            let f = File::open(cfg.resolve(p))?;
            let tr = ObservationTrace::read_csv(BufReader::new(f))?;
            tr.check_against(spec.grid(), spec.k())?;
            (tr, None)
        }
        None => {
            let node = spec
                .grid()
                .nearest_node(ic.x0)
                .ok_or_else(|| Error::Config(format!("x0 = {} is not near an interior node", ic.x0)))?;
            if ic.k0 >= spec.k() {
                return Err(Error::Config(format!("k0 = {} but the problem has {} components", ic.k0, spec.k())));
            }
            if !(ic.sigma >= 0.0) {
                return Err(Error::Config("sigma must be >= 0".into()));
            }
            let truth = ic.truth.clone().unwrap_or_else(|| spec.orders.as_slice().to_vec());
            let truth_spec = spec.with_orders(OrderVector::new(truth.clone()).map_err(config_err)?)?;
            let times = observation_times(ic.t_first, ic.t_obs, ic.per_decade);
            let exact = synthetic_trace(&truth_spec, node, ic.k0, &times, &SectorContour::default_for(&truth_spec.orders))?;
            let tr = if ic.sigma > 0.0 { exact.with_noise(ic.sigma, seed)? } else { exact };
            (tr, Some(truth))
        }
    };
    let init = ic.init.clone().unwrap_or_else(|| default_init(spec.k()));
    let init_o = OrderVector::new(init.clone()).map_err(config_err)?;
    let opts = FitOptions {
        s_grid: ic.s_grid.clone().unwrap_or_else(default_s_grid),
        max_iter: ic.max_iter,
        restarts: ic.restarts,
        residual_floor: ic.residual_floor,
        seed,
        ..FitOptions::default()
    };
    let fit = fit_orders(&trace, &spec, &init_o, &opts)?;
    let delta = truth
        .as_ref()
        .map(|t| fit.alpha_hat.iter().zip(t).map(|(a, b)| a - b).collect::<Vec<f64>>());

    let mut table = String::from("k,alpha_true,alpha_hat,delta\n");
    for (k, a) in fit.alpha_hat.iter().enumerate() {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        table.push_str(&format!(
            "{k},{},{a:.16e},{}\n",
            cell(truth.as_ref().map(|t| t[k])),
            cell(delta.as_ref().map(|d| d[k]))
        ));
    }
    let trace_csv = csv_bytes(|b| trace.write_csv(b))?;
    Ok(Output {
        result: InvertResult {
            x0: trace.x0,
            node: trace.node,
            k0: trace.k0,
            samples: trace.times.len(),
            sigma: if ic.trace.is_some() { 0.0 } else { ic.sigma },
            truth,
            init,
            alpha_hat: fit.alpha_hat,
            delta,
            residual: fit.residual,
            iterations: fit.iterations,
            starts: fit.starts,
            ordering_violated: fit.ordering_violated,
            covariance: fit.covariance,
            s_grid: fit.s_grid,
        },
        table,
        files: vec![("trace.csv".into(), trace_csv)],
    })
}

// ---------------------------------------------------------------- validate

#[derive(Serialize)]
pub struct Row {
    check: &'static str,
    status: &'static str,
    detail: String,
}

#[derive(Serialize)]
pub struct MaximumPrincipleSummary {
    case: &'static str,
    min_interior: Option<Vec<f64>>,
    positive: Option<bool>,
    confirmed: bool,
}

#[derive(Serialize)]
pub struct TrialsSummary {
    trials: usize,
    confirmed: usize,
    worst_min: f64,
    failures: Vec<usize>,
}

#[derive(Serialize)]
pub struct ValidateResult {
    rows: Vec<Row>,
    maximum_principle: Option<MaximumPrincipleSummary>,
    trials: Option<TrialsSummary>,
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn case_name(c: MaximumPrincipleCase) -> &'static str {
    match c {
        MaximumPrincipleCase::StrictCooperative => "strict-cooperative",
        MaximumPrincipleCase::WeakCooperative => "weak-cooperative",
        MaximumPrincipleCase::SemidefinitePair => "semidefinite-pair",
        MaximumPrincipleCase::NotApplicable => "not-applicable",
    }
}

fn forcing(cfg: &Loaded, spec: &ProblemSpec) -> Result<Vec<Vec<f64>>> {
    let Some(exprs) = &cfg.experiment.validate.forcing else {
        return Ok(spec.u0.clone());
    };
    if exprs.len() != spec.k() {
        return Err(Error::Config(format!(
            "[validate] forcing has {} entries for {} components",
            exprs.len(),
            spec.k()
        )));
    }
    exprs
        .iter()
        .map(|e| {
            let ex = Expr::parse(e).map_err(|err| Error::Config(format!("forcing {e:?}: {err}")))?;
            Ok(spec.grid().sample(|x| ex.eval(x, 0.0)))
        })
        .collect()
}

pub fn validate(cfg: &Loaded, seed: u64) -> Result<Output<ValidateResult>> {
    let spec = cfg.problem()?;
    let vc = &cfg.experiment.validate;
    let f = forcing(cfg, &spec)?;
    let mut rows = Vec::new();

    match validate_cooperative(&spec.coupling) {
        Ok(r) => {
            let bad: Vec<String> = r
                .entries
                .iter()
                .filter(|e| !e.nonnegative)
                .map(|e| format!("c[{}][{}] min {:e}", e.k, e.l, e.min))
                .collect();
            rows.push(Row {
                check: "cooperative-weak",
                status: pass(r.weak),
                detail: if r.weak {
                    "off-diagonal couplings are nonnegative".into()
                } else {
                    format!("negative off-diagonal coupling: {}", bad.join(", "))
                },
            });
            let detail = if r.strict {
                "every off-diagonal coupling is positive somewhere".into()
            } else if r.weak {
                let zero: Vec<String> = r
                    .entries
                    .iter()
                    .filter(|e| !e.positive_somewhere)
                    .map(|e| format!("c[{}][{}]", e.k, e.l))
                    .collect();
                format!(
                    "{} vanish identically (decoupled case); only the weak condition holds, \
                     which gives positivity only when every forcing component is nonzero",
                    zero.join(", ")
                )
            } else {
                "weak cooperativity already fails".into()
            };
            rows.push(Row {
                check: "cooperative-strict",
                status: pass(r.strict),
                detail,
            });
            rows.push(Row {
                check: "row-sums-nonpositive",
                status: pass(r.row_sums_nonpositive),
                detail: format!("largest row sum {:e}", r.worst_row_sum),
            });
        }
        Err(Error::Precondition(m)) => {
            for check in ["cooperative-weak", "cooperative-strict", "row-sums-nonpositive"] {
                rows.push(Row {
                    check,
                    status: "n/a",
                    detail: m.clone(),
                });
            }
        }
        Err(e) => return Err(e),
    }

    match validate_negative_semidefinite(&spec.coupling) {
        Ok(r) => rows.push(Row {
            check: "negative-semidefinite",
            status: pass(r.holds),
            detail: format!("largest eigenvalue of the symmetric part {:e} at node {}", r.worst_eigenvalue, r.worst_node),
        }),
        Err(Error::Precondition(m)) => rows.push(Row {
            check: "negative-semidefinite",
            status: "n/a",
            detail: m,
        }),
        Err(e) => return Err(e),
    }

    let mp = match maximum_principle_check(&spec, &f) {
        Ok(v) => {
            let (status, detail) = match v.case {
                MaximumPrincipleCase::NotApplicable => (
                    "n/a",
                    "hypotheses of neither positivity result hold; see min_interior for what the solve gives".to_string(),
                ),
                MaximumPrincipleCase::SemidefinitePair => {
                    ("info", "semidefinite pair regime: positivity is reported, not asserted".to_string())
                }
                _ => (pass(v.confirmed), format!("{} case", case_name(v.case))),
            };
            rows.push(Row {
                check: "maximum-principle",
                status,
                detail,
            });
            Some(MaximumPrincipleSummary {
                case: case_name(v.case),
                min_interior: v.min_interior,
                positive: v.positive,
                confirmed: v.confirmed,
            })
        }
        Err(Error::Precondition(m)) => {
            rows.push(Row {
                check: "maximum-principle",
                status: "n/a",
                detail: m,
            });
            None
        }
        Err(e) => return Err(e),
    };

    let trials = if vc.trials > 0 {
        let s = maximum_principle_trials(vc.trials, seed, vc.trial_nodes)?;
        rows.push(Row {
            check: "maximum-principle-trials",
            status: pass(s.failures.is_empty()),
            detail: format!("{}/{} random cooperative cases positive", s.confirmed, s.trials),
        });
        Some(TrialsSummary {
            trials: s.trials,
            confirmed: s.confirmed,
            worst_min: s.worst_min,
            failures: s.failures,
        })
    } else {
        None
    };

    let table = text(csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["check", "status", "detail"])?;
        for r in &rows {
            w.write_record([r.check, r.status, r.detail.as_str()])?;
        }
        w.flush()?;
        Ok(())
    })?);
    Ok(Output {
        result: ValidateResult {
            rows,
            maximum_principle: mp,
            trials,
        },
        files: vec![("validate.csv".into(), table.clone().into_bytes())],
        table,
    })
}

// ---------------------------------------------------------------- mlf-eval

#[derive(Serialize)]
pub struct Point {
    z: f64,
    value: f64,
}

#[derive(Serialize)]
pub struct MlfResult {
    alpha: f64,
    beta: f64,
    points: Vec<Point>,
}

pub fn mlf_eval(cfg: &Loaded) -> Result<Output<MlfResult>> {
    let mc = &cfg.experiment.mlf;
    let alpha = mc.alpha.ok_or_else(|| Error::Config("[mlf] alpha is required".into()))?;
    let beta = mc.beta.unwrap_or(1.0);
    let params = MLParams::new(alpha, beta).map_err(config_err)?;
    let zs = mc.points()?;
    let values: Vec<f64> = zs.par_iter().map(|z| ml(params, *z)).collect::<Result<_>>()?;
    let mut table = String::from("z,value\n");
    for (z, v) in zs.iter().zip(&values) {
        table.push_str(&format!("{z:.16e},{v:.16e}\n"));
    }
    Ok(Output {
        result: MlfResult {
            alpha,
            beta,
            points: zs.into_iter().zip(values).map(|(z, value)| Point { z, value }).collect(),
        },
        files: vec![("mlf.csv".into(), table.clone().into_bytes())],
        table,
    })
}
