//! State and coordinate transformations.
//!
//! Three transformations connect the plant to the stable target system:
//!
//! * the exponential gauge c(r,t) = u(r,t)·exp(∫₀ʳ b/2D dτ) that removes the
//!   advection term,
//! * the coordinate stretch r̄ = √D(0,t)·∫₀ʳ dτ/√D(τ,t) that normalizes the
//!   diffusion coefficient (strictly increasing in r, r̄(0) = 0),
//! * the Volterra transform c̃(r) = w̃(r) − ∫_r¹ p(r,s,t)·w̃(s) ds and its
//!   numerical inverse.
//!
//! The discretized Volterra map is triangular (node i only reads nodes j ≥ i),
//! so the inverse is exact back-substitution rather than a fixed-point
//! iteration, and apply ∘ invert is an identity up to round-off.

pub use crate::grid::{FieldLabel, SpatialGrid, StateField};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::kernel::KernelField;
use crate::quad::{simpson, CumulativeSimpson, DEFAULT_CELLS};

/// Gauge factor exp(∫₀^(r_i) b/2D dτ) at every grid node.
fn gauge_factors(cs: &CoefficientSet, grid: &SpatialGrid, t: f64) -> Result<Vec<f64>> {
    if cs.advection_free() {
        return Ok(vec![1.0; grid.n_nodes()]);
    }
    let integrand = |tau: f64| cs.advection.value(tau, t) / (2.0 * cs.diffusion.value(tau, t));
    let cum = CumulativeSimpson::build(integrand, 0.0, 1.0, DEFAULT_CELLS);
    let factors: Vec<f64> = grid
        .nodes()
        .map(|r| cum.eval_with(integrand, r).exp())
        .collect();
    if factors.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(
            "gauge factor is not finite; check that D stays positive".into(),
        ));
    }
    Ok(factors)
}

/// Gauge factor at r = 1 only (the measurement conversion u(1,t) → c(1,t)).
pub fn gauge_end_factor(cs: &CoefficientSet, t: f64) -> Result<f64> {
    if cs.advection_free() {
        return Ok(1.0);
    }
    let g = simpson(
        |tau| cs.advection.value(tau, t) / (2.0 * cs.diffusion.value(tau, t)),
        0.0,
        1.0,
        DEFAULT_CELLS,
    )
    .exp();
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::Numerical("gauge factor is not finite".into()))
    }
}

/// Multiplies a plant state by the gauge factor, removing advection.
pub fn gauge_forward(u: &StateField, cs: &CoefficientSet) -> Result<StateField> {
    let g = gauge_factors(cs, &u.grid, u.time)?;
    let values = u.values.iter().zip(&g).map(|(v, g)| v * g).collect();
    StateField::new(u.grid, values, u.time, FieldLabel::C)
}

/// Exact inverse of [`gauge_forward`].
pub fn gauge_inverse(c: &StateField, cs: &CoefficientSet) -> Result<StateField> {
    let g = gauge_factors(cs, &c.grid, c.time)?;
    let values = c.values.iter().zip(&g).map(|(v, g)| v / g).collect();
    StateField::new(c.grid, values, c.time, FieldLabel::U)
}

/// r̄ = √D(0,t) · ∫₀ʳ dτ/√D(τ,t).
pub fn normalized_coordinate(cs: &CoefficientSet, r: f64, t: f64) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&r) {
        return Err(Error::Domain(format!("r = {r} outside [0, 1]")));
    }
    let d0 = cs.diffusion.value(0.0, t);
    if d0 <= 0.0 {
        return Err(Error::Numerical(format!("D(0, {t}) = {d0} is not positive")));
    }
    let cells = ((r * DEFAULT_CELLS as f64).ceil() as usize).max(1);
    let v = d0.sqrt() * simpson(|tau| 1.0 / cs.diffusion.value(tau, t).sqrt(), 0.0, r, cells);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(
            "coordinate stretch integral is not finite".into(),
        ))
    }
}

/// Inverse of [`normalized_coordinate`]: bisection to bracket, then Newton
/// polish with the analytic slope √(D(0,t)/D(r,t)).
pub fn physical_coordinate(cs: &CoefficientSet, r_bar: f64, t: f64) -> Result<f64> {
    let length = normalized_coordinate(cs, 1.0, t)?;
    if !(-1e-12..=length + 1e-12).contains(&r_bar) {
        return Err(Error::Domain(format!(
            "r_bar = {r_bar} outside [0, {length}]"
        )));
    }
    let target = r_bar.clamp(0.0, length);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if normalized_coordinate(cs, mid, t)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d0 = cs.diffusion.value(0.0, t);
    let mut r = 0.5 * (lo + hi);
    for _ in 0..4 {
        let err = normalized_coordinate(cs, r, t)? - target;
        if err.abs() < 1e-14 {
            break;
        }
        let slope = (d0 / cs.diffusion.value(r, t)).sqrt();
        r = (r - err / slope).clamp(0.0, 1.0);
    }
    Ok(r)
}

/// Tabulated coordinate stretch at one time: (r, r̄) samples plus the mapped
/// length r̄(1). Supports fast forward/inverse evaluation for the kernel solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    pub time: f64,
    /// (r, r̄) pairs on a uniform r lattice.
    pub samples: Vec<(f64, f64)>,
    /// r̄ at r = 1.
    pub bar_length: f64,
    sqrt_d0: f64,
}

impl CoordinateMap {
    pub fn build(cs: &CoefficientSet, t: f64, cells: usize) -> Result<Self> {
        let d0 = cs.diffusion.value(0.0, t);
        if d0 <= 0.0 {
            return Err(Error::Numerical(format!("D(0, {t}) = {d0} is not positive")));
        }
        let sqrt_d0 = d0.sqrt();
        let integrand = |tau: f64| sqrt_d0 / cs.diffusion.value(tau, t).sqrt();
        let cum = CumulativeSimpson::build(integrand, 0.0, 1.0, cells);
        let mut samples = Vec::with_capacity(cells + 1);
        for k in 0..=cells {
            let r = k as f64 / cells as f64;
            samples.push((r, cum.eval_with(integrand, r)));
        }
        let bar_length = samples.last().expect("non-empty").1;
        for w in samples.windows(2) {
            if w[1].1 <= w[0].1 {
                return Err(Error::Invariant(
                    "coordinate stretch table is not strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            time: t,
            samples,
            bar_length,
            sqrt_d0,
        })
    }

    /// Forward map r → r̄ from the table plus a partial-cell Simpson step.
    pub fn forward(&self, cs: &CoefficientSet, r: f64) -> f64 {
        let cells = self.samples.len() - 1;
        let pos = (r * cells as f64).floor().clamp(0.0, cells as f64 - 1.0) as usize;
        let (r_k, bar_k) = self.samples[pos];
        if r == r_k {
            return bar_k;
        }
        let t = self.time;
        let f = |tau: f64| self.sqrt_d0 / cs.diffusion.value(tau, t).sqrt();
        let m = 0.5 * (r_k + r);
        bar_k + (f(r_k) + 4.0 * f(m) + f(r)) * (r - r_k) / 6.0
    }

    /// Inverse map r̄ → r: binary search on the table, then Newton with the
    /// analytic slope, stopping at |forward(r) − r̄| ≤ 1e-13.
    pub fn inverse(&self, cs: &CoefficientSet, r_bar: f64) -> Result<f64> {
        if !(-1e-9..=self.bar_length + 1e-9).contains(&r_bar) {
            return Err(Error::Domain(format!(
                "r_bar = {r_bar} outside [0, {}]",
                self.bar_length
            )));
        }
        let target = r_bar.clamp(0.0, self.bar_length);
        let idx = self
            .samples
            .partition_point(|&(_, bar)| bar < target)
            .clamp(1, self.samples.len() - 1);
        let (r_lo, bar_lo) = self.samples[idx - 1];
        let (r_hi, bar_hi) = self.samples[idx];
        let mut r = r_lo + (target - bar_lo) / (bar_hi - bar_lo) * (r_hi - r_lo);
        for _ in 0..8 {
            let err = self.forward(cs, r) - target;
            if err.abs() <= 1e-13 * self.bar_length.max(1.0) {
                break;
            }
            let slope = self.sqrt_d0 / cs.diffusion.value(r, self.time).sqrt();
            r = (r - err / slope).clamp(0.0, 1.0);
        }
        Ok(r)
    }
}

/// Trapezoid weight for node j in the integral over [r_i, 1].
fn tail_weight(i: usize, j: usize, n: usize, h: f64) -> f64 {
    if i == n {
        0.0
    } else if j == i || j == n {
        0.5 * h
    } else {
        h
    }
}

/// c̃(r_i) = w̃(r_i) − ∫_(r_i)¹ p(r_i, s) w̃(s) ds by per-node trapezoid.
pub fn volterra_apply(kernel: &KernelField, w: &StateField) -> Result<StateField> {
    if kernel.grid() != &w.grid {
        return Err(Error::Shape(format!(
            "kernel grid (n = {}) does not match state grid (n = {})",
            kernel.grid().n_cells(),
            w.grid.n_cells()
        )));
    }
    let slice = kernel.slice_at(w.time)?;
    let n = w.grid.n_cells();
    let h = w.grid.spacing();
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut integral = 0.0;
        for j in i..=n {
            integral += tail_weight(i, j, n, h) * slice.get(i, j) * w.values[j];
        }
        values.push(w.values[i] - integral);
    }
    StateField::new(w.grid, values, w.time, FieldLabel::CTilde)
}

/// Solves the discrete second-kind system of [`volterra_apply`] for w̃ by
/// back-substitution from r = 1 downward.
pub fn volterra_invert(kernel: &KernelField, c_tilde: &StateField) -> Result<StateField> {
    if kernel.grid() != &c_tilde.grid {
        return Err(Error::Shape(format!(
            "kernel grid (n = {}) does not match state grid (n = {})",
            kernel.grid().n_cells(),
            c_tilde.grid.n_cells()
        )));
    }
    let slice = kernel.slice_at(c_tilde.time)?;
    let n = c_tilde.grid.n_cells();
    let h = c_tilde.grid.spacing();
    let mut values = vec![0.0; n + 1];
    values[n] = c_tilde.values[n];
    for i in (0..n).rev() {
        let mut known = 0.0;
        for j in (i + 1)..=n {
            known += tail_weight(i, j, n, h) * slice.get(i, j) * values[j];
        }
        let denom = 1.0 - tail_weight(i, i, n, h) * slice.get(i, i);
        if denom.abs() < 1e-12 {
            return Err(Error::Numerical(format!(
                "singular diagonal entry in the Volterra system at node {i} \
                 (1 - w·p(r,r) = {denom:.3e})"
            )));
        }
        values[i] = (c_tilde.values[i] + known) / denom;
    }
    StateField::new(c_tilde.grid, values, c_tilde.time, FieldLabel::WTilde)
}
