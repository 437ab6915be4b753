//! Residual checks for stored kernel fields.
//!
//! Evaluates p_t − D(r)·p_rr + (D(s)·p)_ss + (μ−λ)·p by centered finite
//! differences at interior triangle nodes, and compares the stored diagonal
//! and edge against their data. Used both as a solver diagnostic and as the
//! CLI `verify` command on a kernel loaded from disk.

use crate::coeffs::{CoefficientSet, EffectiveReactionTable};
use crate::error::{Error, Result};

use super::{build_dt_stencils, diagonal_profile, KernelField};

/// Residual magnitudes of a kernel field against its defining equations.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualReport {
    /// Max-abs of the interior PDE residual over all interior nodes & times.
    pub interior_max: f64,
    /// Root-mean-square of the interior PDE residual.
    pub interior_rms: f64,
    /// Max-abs deviation of the stored diagonal from its data quadrature.
    pub diagonal_max: f64,
    /// Max-abs of the stored edge row (must be exactly zero).
    pub edge_max: f64,
    /// (time index, i, j) of the worst interior residual.
    pub worst: Option<(usize, usize, usize)>,
    /// Number of interior nodes inspected.
    pub interior_count: usize,
}

pub fn kernel_residual(kernel: &KernelField, cs: &CoefficientSet, mu: f64) -> Result<ResidualReport> {
    let grid = kernel.grid();
    let n = grid.n_cells();
    let h = grid.spacing();
    let times = kernel.times();
    if times.len() == 2 {
        return Err(Error::Config(
            "residual check needs one (steady) or at least three time samples".into(),
        ));
    }
    let dt_stencils = if times.len() >= 3 {
        Some(build_dt_stencils(times))
    } else {
        None
    };

    let nodes: Vec<f64> = grid.nodes().collect();
    let mut interior_max = 0.0f64;
    let mut sq_sum = 0.0f64;
    let mut count = 0usize;
    let mut worst = None;
    let mut diagonal_max = 0.0f64;
    let mut edge_max = 0.0f64;

    for (k, &t) in times.iter().enumerate() {
        let slice = kernel.slice(k);
        let lambda = EffectiveReactionTable::new(cs, t);
        let lam: Vec<f64> = nodes.iter().map(|&r| lambda.eval(r)).collect();
        let d_r: Vec<f64> = nodes.iter().map(|&r| cs.diffusion.value(r, t)).collect();

        for i in 1..n {
            for j in (i + 1)..n {
                let p_t = match &dt_stencils {
                    None => 0.0,
                    Some(st) => st[k]
                        .iter()
                        .map(|&(idx, w)| w * kernel.slice(idx).get(i, j))
                        .sum(),
                };
                let p_rr =
                    (slice.get(i + 1, j) - 2.0 * slice.get(i, j) + slice.get(i - 1, j)) / (h * h);
                let q_ss = (d_r[j + 1] * slice.get(i, j + 1) - 2.0 * d_r[j] * slice.get(i, j)
                    + d_r[j - 1] * slice.get(i, j - 1))
                    / (h * h);
                let res = p_t - d_r[i] * p_rr + q_ss + (mu - lam[i]) * slice.get(i, j);
                let mag = res.abs();
                sq_sum += res * res;
                count += 1;
                if mag > interior_max {
                    interior_max = mag;
                    worst = Some((k, i, j));
                }
            }
        }

        let diag = diagonal_profile(cs, mu, t, &nodes);
        for i in 0..=n {
            diagonal_max = diagonal_max.max((slice.get(i, i) - diag[i]).abs());
            edge_max = edge_max.max(slice.get(0, i).abs());
        }
    }

    Ok(ResidualReport {
        interior_max,
        interior_rms: if count > 0 {
            (sq_sum / count as f64).sqrt()
        } else {
            0.0
        },
        diagonal_max,
        edge_max,
        worst,
        interior_count: count,
    })
}
