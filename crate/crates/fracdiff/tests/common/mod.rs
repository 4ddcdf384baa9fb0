#![allow(dead_code)]

use fracdiff::special::{ln_gamma, rgamma};
use fracdiff::spectral::{EllipticOperator1D, Grid1D};
use fracdiff::system::{CouplingCoeffs, OrderVector, ProblemFile, ProblemSpec, SampledField};

pub const CORPUS: [(&str, &str); 6] = [
    ("c1_pair_cooperative", include_str!("../data/corpus/c1_pair_cooperative.toml")),
    ("c2_pair_small_orders", include_str!("../data/corpus/c2_pair_small_orders.toml")),
    ("c3_triple_chain", include_str!("../data/corpus/c3_triple_chain.toml")),
    ("c4_pair_competitive", include_str!("../data/corpus/c4_pair_competitive.toml")),
    ("c5_triple_rotation", include_str!("../data/corpus/c5_triple_rotation.toml")),
    ("c6_pair_variable", include_str!("../data/corpus/c6_pair_variable.toml")),
];

/// Corpus problem, optionally on a coarser grid.
pub fn corpus_spec(text: &str, n_interior: Option<usize>) -> ProblemSpec {
    let mut pf = ProblemFile::parse(text).unwrap();
    if let Some(n) = n_interior {
        pf.grid.n_interior = n;
    }
    pf.build().unwrap()
}

/// Single equation with constant diffusion `a` and no source.
pub fn single(alpha: f64, n: usize, a: f64, u0: impl Fn(f64) -> f64) -> ProblemSpec {
    let grid = Grid1D::new(0.0, 1.0, n).unwrap();
    let op = EllipticOperator1D::constant(grid.clone(), a).unwrap();
    let u0 = grid.sample(u0);
    ProblemSpec::new(
        OrderVector::new(vec![alpha]).unwrap(),
        vec![op],
        CouplingCoeffs::zeros(1, n),
        vec![SampledField::zeros(n)],
        vec![u0],
        1.0,
    )
    .unwrap()
}

/// `K` equations with unit diffusion and constant coupling matrix `c`.
pub fn constant_system(alphas: &[f64], n: usize, c: &[Vec<f64>], u0: &[fn(f64) -> f64]) -> ProblemSpec {
    let grid = Grid1D::new(0.0, 1.0, n).unwrap();
    let k = alphas.len();
    let ops = (0..k)
        .map(|_| EllipticOperator1D::constant(grid.clone(), 1.0).unwrap())
        .collect();
    ProblemSpec::new(
        OrderVector::new(alphas.to_vec()).unwrap(),
        ops,
        CouplingCoeffs::constant_matrix(n, c).unwrap(),
        (0..k).map(|_| SampledField::zeros(n)).collect(),
        u0.iter().map(|f| grid.sample(f)).collect(),
        1.0,
    )
    .unwrap()
}

pub fn sin_pi(x: f64) -> f64 {
    (std::f64::consts::PI * x).sin()
}

pub fn bump(x: f64) -> f64 {
    4.0 * x * (1.0 - x)
}

pub fn indicator(x: f64) -> f64 {
    if (0.3..=0.7).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// Two-order multinomial Mittag-Leffler value by direct double summation,
/// `j₁, j₂ <= 150`.
pub fn brute_double_sum(b1: f64, b2: f64, b0: f64, z1: f64, z2: f64) -> f64 {
    let mut s = 0.0;
    for j1 in 0..=150u32 {
        for j2 in 0..=150u32 {
            let n = (j1 + j2) as f64;
            let log_binom = ln_gamma(n + 1.0) - ln_gamma(j1 as f64 + 1.0) - ln_gamma(j2 as f64 + 1.0);
            let term = log_binom.exp() * z1.powi(j1 as i32) * z2.powi(j2 as i32);
            s += term * rgamma(b0 + b1 * j1 as f64 + b2 * j2 as f64);
        }
    }
    s
}
