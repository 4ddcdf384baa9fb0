//! Implicit L1 time stepping with all coupling terms at the new level.

use super::quadrature::caputo_l1_weights;
use super::{Method, Solution, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::BlockTridiag;
use crate::spectral::assemble;
use crate::system::ProblemSpec;

/// Solves on the full finite-difference grid (no modal truncation).
///
/// Unknowns are ordered node-major, so every step is one block-tridiagonal
/// system with `K×K` blocks.
pub fn l1_solve(spec: &ProblemSpec, tgrid: &TimeGrid) -> Result<Solution> {
    spec.validate()?;
    let kk = spec.k();
    let grid = spec.grid().clone();
    let n = grid.n_interior;
    let m = tgrid.m();
    let t = tgrid.nodes();
    let inv2h = 0.5 / grid.h;
    let weights = (0..kk)
        .map(|k| caputo_l1_weights(spec.orders.alpha(k), tgrid))
        .collect::<Result<Vec<_>>>()?;
    let stencils = spec
        .operators
        .iter()
        .map(assemble)
        .collect::<Result<Vec<_>>>()?;

    let mut sol = Solution::zeros(grid, tgrid.clone(), spec.orders.as_slice().to_vec(), Method::L1);
    for k in 0..kk {
        sol.at_mut(k, 0).copy_from_slice(&spec.u0[k]);
    }
    // increments u^i - u^{i-1}, [k][i][x]
    let mut diffs = vec![vec![vec![0.0; n]; m + 1]; kk];
    let mut sys = BlockTridiag::<f64>::zeros(kk, n);
    let mut rhs = vec![0.0; n * kk];
    let mut fbuf = vec![0.0; n];
    let mut hist = vec![0.0; n];
    let mut cfield = vec![vec![0.0; n]; kk * kk];
    let mut bfield = vec![vec![0.0; n]; kk * kk];
    let weak = spec.coupling.weakly_coupled();

    for j in 1..=m {
        let tj = t[j];
        for e in 0..kk * kk {
            spec.coupling.c[e].at_into(tj, &mut cfield[e]);
            if !weak {
                spec.coupling.b[e].at_into(tj, &mut bfield[e]);
            }
        }
        sys.lower.iter_mut().for_each(|v| *v = 0.0);
        sys.diag.iter_mut().for_each(|v| *v = 0.0);
        sys.upper.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..kk {
            let wrow = weights[k].row(j);
            let wjj = wrow[j];
            spec.source[k].at_into(tj, &mut fbuf);
            // history of the discrete Caputo derivative
            hist.iter_mut().for_each(|v| *v = 0.0);
            for i in 1..j {
                let w = wrow[i];
                for (h, d) in hist.iter_mut().zip(&diffs[k][i]) {
                    *h += w * d;
                }
            }
            let prev = sol.at(k, j - 1);
            for x in 0..n {
                rhs[x * kk + k] = fbuf[x] + wjj * prev[x] - hist[x];
            }
            let st = &stencils[k];
            for x in 0..n {
                let di = sys.idx(x, k, k);
                sys.diag[di] += wjj + st.diag[x];
                if x > 0 {
                    sys.lower[di] += st.off[x - 1];
                }
                if x + 1 < n {
                    sys.upper[di] += st.off[x];
                }
                for l in 0..kk {
                    let e = k * kk + l;
                    let ix = sys.idx(x, k, l);
                    sys.diag[ix] -= cfield[e][x];
                    if !weak {
                        let bv = bfield[e][x] * inv2h;
                        sys.lower[ix] += bv;
                        sys.upper[ix] -= bv;
                    }
                }
            }
        }
        let (u, _) = sys
            .solve(&rhs)
            .map_err(|e| Error::Numeric(format!("L1 step {j}: {e}")))?;
        for k in 0..kk {
            for x in 0..n {
                let v = u[x * kk + k];
                diffs[k][j][x] = v - sol.at(k, j - 1)[x];
            }
            let dst = sol.at_mut(k, j);
            for x in 0..n {
                dst[x] = u[x * kk + k];
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("L1 step {j} produced non-finite values")));
        }
    }
    Ok(sol)
}
