//! Output-injection gains extracted from a solved kernel.
//!
//! The interior injection profile and the boundary gain are
//!
//! ```text
//! p1(r,t)  = −½·p(r,1,t)·D(1,t) − ∂_s[p(r,s,t)·D(s,t)] at s = 1
//! p10(t)   = ½ + H(t) − p(1,1,t)
//! ```
//!
//! The s-derivative at s = 1 uses a second-order one-sided 3-point stencil on
//! the kernel's s-samples. The stencil needs three nodes with s ≥ r, which the
//! triangle only provides for r ≤ 1 − 2h; the last two radial nodes are filled
//! by quadratic extrapolation of the profile (local O(h³), and the simulation
//! reads p1 only at interior nodes). Gains are precomputed at every kernel
//! time stamp and interpolated linearly in t during simulation.

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::kernel::KernelField;

/// Injection gains sampled at the kernel's grid nodes and time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    grid: SpatialGrid,
    times: Vec<f64>,
    /// p1 profiles, one Vec per time stamp, one value per grid node.
    p1: Vec<Vec<f64>>,
    /// p10 per time stamp.
    p10: Vec<f64>,
}

/// Gains interpolated at one simulation time.
pub struct GainSample<'a> {
    lo_p1: &'a [f64],
    hi_p1: &'a [f64],
    weight: f64,
    pub p10: f64,
}

impl GainSample<'_> {
    #[inline]
    pub fn p1(&self, node: usize) -> f64 {
        (1.0 - self.weight) * self.lo_p1[node] + self.weight * self.hi_p1[node]
    }
}

impl ObserverGains {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn p1_profile(&self, time_idx: usize) -> &[f64] {
        &self.p1[time_idx]
    }

    pub fn p10_value(&self, time_idx: usize) -> f64 {
        self.p10[time_idx]
    }

    /// Linear-in-t sample; errors when t falls outside the covered range.
    /// A single-stamp gain set comes from a time-invariant kernel and is
    /// valid at every t.
    pub fn at(&self, t: f64) -> Result<GainSample<'_>> {
        if self.times.len() == 1 {
            return Ok(GainSample {
                lo_p1: &self.p1[0],
                hi_p1: &self.p1[0],
                weight: 0.0,
                p10: self.p10[0],
            });
        }
        let first = self.times[0];
        let last = *self.times.last().expect("non-empty");
        let tol = 1e-9 * (1.0 + (last - first).abs());
        if t < first - tol || t > last + tol {
            return Err(Error::Config(format!(
                "gains cover [{first}, {last}] but the step needs t = {t}"
            )));
        }
        let t = t.clamp(first, last);
        let hi = self
            .times
            .partition_point(|&tk| tk < t)
            .clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[hi - 1], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        Ok(GainSample {
            lo_p1: &self.p1[hi - 1],
            hi_p1: &self.p1[hi],
            weight: w,
            p10: (1.0 - w) * self.p10[hi - 1] + w * self.p10[hi],
        })
    }
}

/// Extracts the injection gains from a solved kernel.
pub fn compute_gains(kernel: &KernelField, cs: &CoefficientSet) -> Result<ObserverGains> {
    let grid = *kernel.grid();
    let n = grid.n_cells();
    if n < 4 {
        return Err(Error::Resolution(format!(
            "gain extraction needs at least 3 s-samples near s = 1 (grid has {n} cells)"
        )));
    }
    let h = grid.spacing();
    let mut p1_all = Vec::with_capacity(kernel.times().len());
    let mut p10_all = Vec::with_capacity(kernel.times().len());

    for (k, &t) in kernel.times().iter().enumerate() {
        let slice = kernel.slice(k);
        let d_end = cs.diffusion.value(1.0, t);
        let mut p1 = vec![0.0; n + 1];
        for i in 0..=n.saturating_sub(2) {
            let q = |j: usize| slice.get(i, j) * cs.diffusion.value(grid.node(j), t);
            let dq = (3.0 * q(n) - 4.0 * q(n - 1) + q(n - 2)) / (2.0 * h);
            p1[i] = -0.5 * slice.get(i, n) * d_end - dq;
        }
        // Quadratic extrapolation for the two nodes the one-sided stencil
        // cannot reach.
        p1[n - 1] = 3.0 * p1[n - 2] - 3.0 * p1[n - 3] + p1[n - 4];
        p1[n] = 3.0 * p1[n - 1] - 3.0 * p1[n - 2] + p1[n - 3];

        let bd = cs.boundary_data(t)?;
        p10_all.push(0.5 + bd.robin_slope - slice.get(n, n));
        p1_all.push(p1);
    }

    Ok(ObserverGains {
        grid,
        times: kernel.times().to_vec(),
        p1: p1_all,
        p10: p10_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoeffField, TimeFunction};
    use crate::kernel::{solve_kernel, solve_kernel_direct};

    fn unit_cs(phi: f64) -> CoefficientSet {
        CoefficientSet::new(
            CoeffField::constant(1.0),
            CoeffField::constant(0.0),
            CoeffField::constant(phi),
            TimeFunction::constant(0.0),
            10.0,
        )
    }

    #[test]
    fn zero_kernel_gives_pure_boundary_gain() {
        let grid = SpatialGrid::new(50).unwrap();
        let kernel = KernelField::from_fn(grid, &[0.0], |_, _, _| 0.0);
        let cs = unit_cs(0.0);
        let gains = compute_gains(&kernel, &cs).unwrap();
        assert!(gains.p1_profile(0).iter().all(|&v| v == 0.0));
        assert_eq!(gains.p10_value(0), 1.5);
    }

    #[test]
    fn boundary_gain_from_diagonal_data() {
        // D = 1, lambda = 0, mu = -1: p(1,1) = -1/2, so p10 = 1.5 + 0.5 = 2.
        let cs = unit_cs(0.0);
        let grid = SpatialGrid::new(60).unwrap();
        let field = solve_kernel_direct(&cs, -1.0, &grid).unwrap();
        let gains = compute_gains(&field, &cs).unwrap();
        assert!((gains.p10_value(0) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_scaling_shifts_gains_linearly() {
        let cs = unit_cs(0.0);
        let grid = SpatialGrid::new(40).unwrap();
        let base = solve_kernel(&cs, -1.0, &grid, &[0.0], 1e-10, 50).unwrap().field;
        let k = 2.5;
        let mut scaled = base.clone();
        for i in 0..=40 {
            for j in i..=40 {
                let v = base.slice(0).get(i, j);
                scaled.slice_mut(0).set(i, j, k * v);
            }
        }
        let g_base = compute_gains(&base, &cs).unwrap();
        let g_scaled = compute_gains(&scaled, &cs).unwrap();
        let corner = base.slice(0).get(40, 40);
        for i in 0..=40 {
            assert!(
                (g_scaled.p1_profile(0)[i] - k * g_base.p1_profile(0)[i]).abs() < 1e-12,
                "node {i}"
            );
        }
        let shift = g_scaled.p10_value(0) - g_base.p10_value(0);
        assert!((shift - (1.0 - k) * corner).abs() < 1e-12);
    }

    /// Natural cubic spline through (s_j, q_j), differentiated at the last
    /// node. Independent of the one-sided stencil.
    fn spline_end_derivative(s: &[f64], q: &[f64]) -> f64 {
        let n = s.len() - 1;
        let h: Vec<f64> = (0..n).map(|k| s[k + 1] - s[k]).collect();
        // Solve the natural-spline tridiagonal system for second derivatives.
        let mut sub = vec![0.0; n + 1];
        let mut dia = vec![1.0; n + 1];
        let mut sup = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        for k in 1..n {
            sub[k] = h[k - 1];
            dia[k] = 2.0 * (h[k - 1] + h[k]);
            sup[k] = h[k];
            rhs[k] = 6.0 * ((q[k + 1] - q[k]) / h[k] - (q[k] - q[k - 1]) / h[k - 1]);
        }
        for k in 1..=n {
            let w = sub[k] / dia[k - 1];
            dia[k] -= w * sup[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        let mut m = vec![0.0; n + 1];
        m[n] = rhs[n] / dia[n];
        for k in (0..n).rev() {
            m[k] = (rhs[k] - sup[k] * m[k + 1]) / dia[k];
        }
        // Derivative at the right end of the last segment.
        let k = n - 1;
        (q[k + 1] - q[k]) / h[k] + h[k] * (2.0 * m[k + 1] + m[k]) / 6.0
    }

    #[test]
    fn interior_profile_matches_spline_oracle() {
        let cs = unit_cs(0.0);
        let mut errs = Vec::new();
        for &n in &[40usize, 80] {
            let grid = SpatialGrid::new(n).unwrap();
            let field = solve_kernel(&cs, -1.0, &grid, &[0.0], 1e-11, 50).unwrap().field;
            let gains = compute_gains(&field, &cs).unwrap();
            let d_end = cs.diffusion.value(1.0, 0.0);
            let mut max_err = 0.0f64;
            for i in (0..=n - 2).step_by(n / 10) {
                let s: Vec<f64> = (i..=n).map(|j| grid.node(j)).collect();
                let q: Vec<f64> = (i..=n)
                    .map(|j| field.slice(0).get(i, j) * cs.diffusion.value(grid.node(j), 0.0))
                    .collect();
                if s.len() < 4 {
                    continue;
                }
                let oracle = -0.5 * field.slice(0).get(i, n) * d_end - spline_end_derivative(&s, &q);
                max_err = max_err.max((gains.p1_profile(0)[i] - oracle).abs());
            }
            errs.push(max_err);
        }
        // Both methods are O(h^2); their disagreement must shrink with h.
        assert!(errs[0] > errs[1], "errors: {errs:?}");
        assert!(errs[1] < 1e-3, "errors: {errs:?}");
    }

    #[test]
    fn rejects_too_coarse_grids() {
        let grid = SpatialGrid::new(3).unwrap();
        let kernel = KernelField::from_fn(grid, &[0.0], |_, _, _| 0.0);
        let cs = unit_cs(0.0);
        assert!(matches!(
            compute_gains(&kernel, &cs),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn time_interpolation_is_linear() {
        let grid = SpatialGrid::new(20).unwrap();
        let kernel = KernelField::from_fn(grid, &[0.0, 1.0], |r, s, t| (1.0 + t) * r * s);
        let cs = unit_cs(0.0);
        let gains = compute_gains(&kernel, &cs).unwrap();
        let mid = gains.at(0.5).unwrap();
        for i in 0..5 {
            let expect = 0.5 * (gains.p1_profile(0)[i] + gains.p1_profile(1)[i]);
            assert!((mid.p1(i) - expect).abs() < 1e-14);
        }
        assert!(gains.at(1.5).is_err());
    }
}
