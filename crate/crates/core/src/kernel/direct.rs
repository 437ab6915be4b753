//! Direct finite-difference solver for the steady kernel equation.
//!
//! Restricted to time-invariant coefficients, where the kernel equation
//! reduces to the Goursat problem
//!
//! ```text
//! D(r)·p_rr − (D(s)·p)_ss − (μ−λ(r))·p = 0
//! ```
//!
//! with data on the diagonal s = r and the edge r = 0. Writing q = D(s)·p,
//! the scheme marches q column by column in s with the centered update
//!
//! ```text
//! q(i,j) = 2q(i,j−1) − q(i,j−2) + h²·[D(r_i)·p_rr(i,j−1) − (μ−λ_i)·p(i,j−1)]
//! ```
//!
//! which imposes a zero residual of the centered stencil at every marched
//! interior node. The node next to the diagonal in each column comes from a
//! second-order Taylor step off the diagonal, closing p_s there with the
//! analytic derivative of the diagonal data minus a one-sided p_r estimate.
//!
//! Marching in s is the stable direction exactly when D(r)/D(s) ≤ 1 on the
//! triangle, i.e. for diffusion non-decreasing in r; other profiles are
//! rejected rather than silently producing an unstable march. This solver is
//! an independent cross-check for `solve_kernel`, not a replacement.

use crate::coeffs::{CoefficientSet, EffectiveReactionTable};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

use super::{diagonal_profile, KernelField, TriangularKernel};

pub fn solve_kernel_direct(
    cs: &CoefficientSet,
    mu: f64,
    grid: &SpatialGrid,
) -> Result<KernelField> {
    if !cs.kernel_time_invariant() {
        return Err(Error::Unsupported(
            "the direct kernel solver handles time-invariant coefficients only".into(),
        ));
    }
    let n = grid.n_cells();
    if n < 4 {
        return Err(Error::Config(format!(
            "direct kernel solve needs a grid of at least 4 cells, got {n}"
        )));
    }
    let t = 0.0;
    let h = grid.spacing();
    let nodes: Vec<f64> = grid.nodes().collect();
    let d: Vec<f64> = nodes.iter().map(|&r| cs.diffusion.value(r, t)).collect();

    // CFL of the s-march: D(r_i)/D(s_j) must not exceed 1 on the triangle.
    let mut running_max = f64::NEG_INFINITY;
    for j in 0..=n {
        running_max = running_max.max(d[j]);
        if running_max / d[j] > 1.0 + 1e-9 {
            return Err(Error::Unsupported(
                "direct kernel solve requires diffusion non-decreasing in r \
                 (marching in s would be unstable)"
                    .into(),
            ));
        }
    }

    let lambda_table = EffectiveReactionTable::new(cs, t);
    let lam: Vec<f64> = nodes.iter().map(|&r| lambda_table.eval(r)).collect();
    let diag = diagonal_profile(cs, mu, t, &nodes);
    // d/dr of the diagonal trace, analytic from the data ODE.
    let ddiag: Vec<f64> = (0..=n)
        .map(|i| {
            let r = nodes[i];
            -cs.diffusion.d_r(r, t) / (2.0 * d[i]) * diag[i] + (mu - lam[i]) / (2.0 * d[i])
        })
        .collect();

    let mut p = TriangularKernel::zeros(n);
    for i in 0..=n {
        p.set(i, i, diag[i]);
    }
    // p(0, j) = 0 already.

    for j in 1..=n {
        // Node next to the diagonal: Taylor off (j-1, j-1).
        if j >= 2 {
            let i = j - 1;
            let r = nodes[i];
            let p_r = if j >= 3 {
                (3.0 * p.get(i, i) - 4.0 * p.get(i - 1, i) + p.get(i - 2, i)) / (2.0 * h)
            } else {
                // Corner start: only one backward node exists. Local O(h²)
                // error at a single node keeps the march second order.
                (p.get(i, i) - p.get(i - 1, i)) / h
            };
            let p_s = ddiag[i] - p_r;
            let p_ss = if j >= 3 {
                let p_rr = (p.get(i, i) - 2.0 * p.get(i - 1, i) + p.get(i - 2, i)) / (h * h);
                (d[i] * p_rr
                    - (mu - lam[i]) * diag[i]
                    - cs.diffusion.d_rr(r, t) * diag[i]
                    - 2.0 * cs.diffusion.d_r(r, t) * p_s)
                    / d[i]
            } else {
                0.0
            };
            p.set(i, j, diag[i] + h * p_s + 0.5 * h * h * p_ss);
        }
        // Interior of the column: centered march in s.
        for i in (1..=j.saturating_sub(2)).rev() {
            let q2 = d[j - 2] * p.get(i, j - 2);
            let q1 = d[j - 1] * p.get(i, j - 1);
            let p_rr_scaled =
                p.get(i + 1, j - 1) - 2.0 * p.get(i, j - 1) + p.get(i - 1, j - 1);
            let q = 2.0 * q1 - q2 + d[i] * p_rr_scaled
                - h * h * (mu - lam[i]) * p.get(i, j - 1);
            p.set(i, j, q / d[j]);
        }
    }

    KernelField::from_slices(*grid, vec![t], vec![p])
}
