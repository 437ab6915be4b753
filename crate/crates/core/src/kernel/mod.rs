//! Observer-kernel solver.
//!
//! The output-injection kernel p(r,s,t) lives on the triangle 0 ≤ r ≤ s ≤ 1
//! and satisfies
//!
//! ```text
//! p_t = D(r,t)·p_rr − (D(s,t)·p)_ss − (μ − λ(r,t))·p
//! p(r,r,t) = (1/2√D(r,t)) ∫₀ʳ (μ−λ)/√D dτ          (diagonal data)
//! p(0,s,t) = 0                                        (edge condition)
//! ```
//!
//! The primary solver normalizes the problem in three steps (multiply by
//! D(s,t), stretch coordinates so the diffusion coefficient becomes D(0,t),
//! strip first-derivative terms with a (D(r)D(s))^(1/4) gauge) and then works
//! in characteristic coordinates ξ = r̄+s̄, η = r̄−s̄, where the PDE becomes an
//! integral equation solved by successive approximation:
//!
//! ```text
//! ψ⁰(ξ,η,t)   = ∫_{−η}^{ξ} (μ − λ(φ⁻¹(τ/2),t)) / (4√D(0,t)) dτ
//! ψ^{n+1}     = (1/4D(0,t)) ∫_{−η}^{ξ} ∫₀^η [ψ_tⁿ − λ̄·ψⁿ] dσ dτ
//! ψ           = Σ ψⁿ
//! ```
//!
//! ψ⁰ is the exact inhomogeneous term of the integral equation: evaluating the
//! boundary integrand pointwise instead of integrating it would violate the
//! diagonal data whenever λ varies in r. Per-iterate sweeps and the final
//! kernel evaluation both integrate a piecewise-cubic interpolant of the
//! lattice samples (see `lattice`), so stored kernel values inherit a smooth
//! error field and finite-difference residual checks converge at O(h²).
//!
//! ψ_t is taken at fixed (ξ,η) by three-point time differences, exactly zero
//! for time-invariant coefficients. The time dependence of the coordinate
//! stretch itself carries no extra terms here; `kernel_residual` measures the
//! effect of that modeling choice against the original equations.

mod direct;
mod lattice;
mod residual;

pub use direct::solve_kernel_direct;
pub use residual::{kernel_residual, ResidualReport};

use crate::coeffs::{CoefficientSet, EffectiveReactionTable};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::quad::{CumulativeSimpson, DEFAULT_CELLS};
use crate::xform::CoordinateMap;
use lattice::{cr_cell_integrals, cr_integral_to, cr_prefix, Lattice};

/// Packed triangular samples p(r_i, s_j) for 0 ≤ i ≤ j ≤ n at one time.
///
/// Storage covers only the triangle; reads with s < r are a programming
/// error and panic.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularKernel {
    n: usize,
    data: Vec<f64>,
}

impl TriangularKernel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; (n + 1) * (n + 2) / 2],
        }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        assert!(
            i <= j && j <= self.n,
            "kernel read outside the triangle: (i, j) = ({i}, {j}), n = {}",
            self.n
        );
        // Row i starts after i full rows of shrinking length: i·(n+1) − i(i−1)/2.
        i * (self.n + 1) - (i * i - i) / 2 + (j - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.offset(i, j);
        self.data[k] = v;
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Linear blend of two slices (time interpolation).
    fn blend(&self, other: &Self, w: f64) -> Self {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Self { n: self.n, data }
    }
}

/// Kernel samples on the grid triangle across a set of time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    grid: SpatialGrid,
    times: Vec<f64>,
    slices: Vec<TriangularKernel>,
}

impl KernelField {
    pub fn from_slices(
        grid: SpatialGrid,
        times: Vec<f64>,
        slices: Vec<TriangularKernel>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::Shape(format!(
                "{} time stamps vs {} kernel slices",
                times.len(),
                slices.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("kernel time stamps must be increasing".into()));
        }
        if slices.iter().any(|s| s.n != grid.n_cells()) {
            return Err(Error::Shape("kernel slice size does not match grid".into()));
        }
        Ok(Self {
            grid,
            times,
            slices,
        })
    }

    /// Builds a field from a closure p(r, s, t); used by tests and file IO.
    pub fn from_fn(grid: SpatialGrid, times: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let n = grid.n_cells();
        let slices = times
            .iter()
            .map(|&t| {
                let mut s = TriangularKernel::zeros(n);
                for i in 0..=n {
                    for j in i..=n {
                        s.set(i, j, f(grid.node(i), grid.node(j), t));
                    }
                }
                s
            })
            .collect();
        Self {
            grid,
            times: times.to_vec(),
            slices,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slice(&self, k: usize) -> &TriangularKernel {
        &self.slices[k]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut TriangularKernel {
        &mut self.slices[k]
    }

    /// Kernel slice at time t, linearly interpolated between stored stamps.
    pub fn slice_at(&self, t: f64) -> Result<TriangularKernel> {
        if self.slices.len() == 1 {
            return Ok(self.slices[0].clone());
        }
        let first = self.times[0];
        let last = *self.times.last().expect("non-empty");
        let tol = 1e-9 * (1.0 + (last - first).abs());
        if t < first - tol || t > last + tol {
            return Err(Error::Domain(format!(
                "t = {t} outside the kernel's time range [{first}, {last}]"
            )));
        }
        let t = t.clamp(first, last);
        let hi = self
            .times
            .partition_point(|&tk| tk < t)
            .clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[hi - 1], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        if w == 0.0 {
            Ok(self.slices[hi - 1].clone())
        } else if w == 1.0 {
            Ok(self.slices[hi].clone())
        } else {
            Ok(self.slices[hi - 1].blend(&self.slices[hi], w))
        }
    }
}

/// Diagonal data p(r,r,t) evaluated at the given radii:
/// (1/2√D(r,t)) ∫₀ʳ (μ−λ)/√D dτ.
pub fn diagonal_profile(cs: &CoefficientSet, mu: f64, t: f64, radii: &[f64]) -> Vec<f64> {
    let lambda = EffectiveReactionTable::new(cs, t);
    let integrand = |u: f64| (mu - lambda.eval(u)) / cs.diffusion.value(u, t).sqrt();
    let cum = CumulativeSimpson::build(integrand, 0.0, 1.0, DEFAULT_CELLS);
    radii
        .iter()
        .map(|&r| cum.eval_with(integrand, r) / (2.0 * cs.diffusion.value(r, t).sqrt()))
        .collect()
}

/// Second-derivative contribution of the diffusion gauge to the normalized
/// reaction term:
/// L(y,t) = (1/4)·∂_y(D_y/√D)/√D(0,t) + D_y²/(16·D(y,t)·D(0,t)).
pub fn curvature_coef(cs: &CoefficientSet, y: f64, t: f64) -> f64 {
    let d = cs.diffusion.value(y, t);
    let dy = cs.diffusion.d_r(y, t);
    let dyy = cs.diffusion.d_rr(y, t);
    let d0 = cs.diffusion.value(0.0, t);
    let dy_over_sqrt_deriv = dyy / d.sqrt() - dy * dy / (2.0 * d.powf(1.5));
    0.25 * dy_over_sqrt_deriv / d0.sqrt() + dy * dy / (16.0 * d * d0)
}

fn normalized_reaction_with(cs: &CoefficientSet, mu: f64, r: f64, s: f64, t: f64, lam_r: f64) -> f64 {
    let d_r = cs.diffusion.value(r, t);
    let d_s = cs.diffusion.value(s, t);
    let dr_r = cs.diffusion.d_r(r, t);
    let dr_s = cs.diffusion.d_r(s, t);
    let dt_r = cs.diffusion.d_t(r, t);
    let dt_s = cs.diffusion.d_t(s, t);
    let d0 = cs.diffusion.value(0.0, t);
    -dr_r * dr_r / (8.0 * d_r) + dr_s * dr_s / (8.0 * d_s)
        + d0 * (curvature_coef(cs, r, t) - curvature_coef(cs, s, t))
        - (dt_r * d_s + d_r * dt_s) / (4.0 * d_r * d_s)
        + dt_s / d_s
        - (mu - lam_r)
}

/// Reaction coefficient λ̄(r,s,t) of the normalized kernel equation.
pub fn normalized_reaction(cs: &CoefficientSet, mu: f64, r: f64, s: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0 + 1e-12).contains(&r) || !(0.0..=1.0 + 1e-12).contains(&s) || r > s + 1e-12 {
        return Err(Error::Domain(format!(
            "(r, s) = ({r}, {s}) outside the triangle 0 ≤ r ≤ s ≤ 1"
        )));
    }
    let lam_r = cs.effective_reaction(r, t)?;
    Ok(normalized_reaction_with(cs, mu, r, s, t, lam_r))
}

/// Inhomogeneous term ψ⁰(ξ,η,t) of the characteristic integral equation.
///
/// Standalone reference path: rebuilds the coordinate map per call. The
/// solver uses tabulated equivalents.
pub fn char_initial(cs: &CoefficientSet, mu: f64, xi: f64, eta: f64, t: f64) -> Result<f64> {
    let map = CoordinateMap::build(cs, t, 2000)?;
    let ell = map.bar_length;
    if !(-1e-9..=2.0 * ell + 1e-9).contains(&xi) || eta > 1e-9 || eta < -xi - 1e-9 {
        return Err(Error::Domain(format!(
            "(xi, eta) = ({xi}, {eta}) outside the characteristic triangle"
        )));
    }
    let lambda = EffectiveReactionTable::new(cs, t);
    let integrand = |u: f64| (mu - lambda.eval(u)) / cs.diffusion.value(u, t).sqrt();
    let cum = CumulativeSimpson::build(integrand, 0.0, 1.0, DEFAULT_CELLS);
    let x1 = map.inverse(cs, (0.5 * xi).clamp(0.0, ell))?;
    let x2 = map.inverse(cs, (-0.5 * eta).clamp(0.0, ell))?;
    Ok(0.5 * (cum.eval_with(integrand, x1) - cum.eval_with(integrand, x2)))
}

/// One iterate of the kernel series on the characteristic lattice, stored for
/// every kernel time stamp.
#[derive(Debug, Clone)]
pub struct CharField {
    pub iterate: usize,
    pub times: Vec<f64>,
    pub delta: f64,
    m: usize,
    slices: Vec<Vec<f64>>,
}

impl CharField {
    pub fn n_xi(&self) -> usize {
        2 * self.m + 1
    }

    pub fn n_eta(&self) -> usize {
        self.m + 1
    }

    pub fn xi(&self, a: usize) -> f64 {
        a as f64 * self.delta
    }

    pub fn eta(&self, c: usize) -> f64 {
        -(c as f64) * self.delta
    }

    pub fn get(&self, time_idx: usize, a: usize, c: usize) -> f64 {
        self.slices[time_idx][a * (self.m + 1) + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.slices
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |mx, v| mx.max(v.abs()))
    }
}

/// Result of a kernel solve with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub field: KernelField,
    /// Number of series terms computed (ψ⁰ counts as the first).
    pub iterations: usize,
    /// Max-abs of the last iterate added.
    pub tail_norm: f64,
    /// Max-abs of every iterate in order.
    pub iterate_norms: Vec<f64>,
}

struct TimeContext<'a> {
    t: f64,
    d0: f64,
    ell: f64,
    map: CoordinateMap,
    lambda: EffectiveReactionTable<'a>,
    f_cum: CumulativeSimpson,
    /// λ̄ at every lattice node (rectangular storage).
    lam_bar: Vec<f64>,
    /// ψ⁰ at every lattice node.
    psi0: Vec<f64>,
    /// r̄ at the spatial grid nodes.
    bar_nodes: Vec<f64>,
}

impl<'a> TimeContext<'a> {
    fn f_integral(&self, cs: &CoefficientSet, mu: f64, x: f64) -> f64 {
        let t = self.t;
        self.f_cum.eval_with(
            |u: f64| (mu - self.lambda.eval(u)) / cs.diffusion.value(u, t).sqrt(),
            x,
        )
    }

    /// ψ⁰ at an arbitrary characteristic point.
    fn initial_at(&self, cs: &CoefficientSet, mu: f64, xi: f64, eta: f64) -> Result<f64> {
        let x1 = self.map.inverse(cs, (0.5 * xi).clamp(0.0, self.ell))?;
        let x2 = self.map.inverse(cs, (-0.5 * eta).clamp(0.0, self.ell))?;
        Ok(0.5 * (self.f_integral(cs, mu, x1) - self.f_integral(cs, mu, x2)))
    }
}

/// Successive-approximation solver with per-time caches.
pub struct KernelSolver<'a> {
    cs: &'a CoefficientSet,
    mu: f64,
    grid: SpatialGrid,
    times: Vec<f64>,
    lattice: Lattice,
    ctxs: Vec<TimeContext<'a>>,
    time_invariant: bool,
    /// Three-point first-derivative stencils in t, one per time index.
    dt_stencils: Vec<[(usize, f64); 3]>,
}

impl<'a> KernelSolver<'a> {
    pub fn new(
        cs: &'a CoefficientSet,
        mu: f64,
        grid: &SpatialGrid,
        t_samples: &[f64],
    ) -> Result<Self> {
        if t_samples.is_empty() {
            return Err(Error::Config("kernel solve needs at least one time sample".into()));
        }
        if t_samples.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("kernel time samples must be increasing".into()));
        }
        let time_invariant = cs.kernel_time_invariant();
        if !time_invariant && t_samples.len() < 3 {
            return Err(Error::Config(format!(
                "time-varying coefficients need at least 3 kernel time samples for \
                 time differencing, got {}",
                t_samples.len()
            )));
        }
        let m = grid.n_cells();
        if m < 4 {
            return Err(Error::Config(format!(
                "kernel solve needs a grid of at least 4 cells, got {m}"
            )));
        }

        let mut maps = Vec::with_capacity(t_samples.len());
        let mut ell_max = 0.0f64;
        for &t in t_samples {
            let map = CoordinateMap::build(cs, t, (2 * m).max(2000))?;
            ell_max = ell_max.max(map.bar_length);
            maps.push(map);
        }
        let lattice = Lattice::new(m, ell_max);

        let mut ctxs = Vec::with_capacity(t_samples.len());
        for (&t, map) in t_samples.iter().zip(maps) {
            ctxs.push(Self::build_context(cs, mu, grid, &lattice, t, map)?);
        }

        let dt_stencils = if time_invariant || t_samples.len() < 3 {
            Vec::new()
        } else {
            build_dt_stencils(t_samples)
        };

        Ok(Self {
            cs,
            mu,
            grid: *grid,
            times: t_samples.to_vec(),
            lattice,
            ctxs,
            time_invariant,
            dt_stencils,
        })
    }

    fn build_context(
        cs: &'a CoefficientSet,
        mu: f64,
        grid: &SpatialGrid,
        lat: &Lattice,
        t: f64,
        map: CoordinateMap,
    ) -> Result<TimeContext<'a>> {
        let d0 = cs.diffusion.value(0.0, t);
        if d0 <= 0.0 {
            return Err(Error::Invariant(format!("D(0, {t}) = {d0} is not positive")));
        }
        let ell = map.bar_length;
        let lambda = EffectiveReactionTable::new(cs, t);
        let integrand = |u: f64| (mu - lambda.eval(u)) / cs.diffusion.value(u, t).sqrt();
        let f_cum = CumulativeSimpson::build(integrand, 0.0, 1.0, DEFAULT_CELLS);

        let m = lat.m;
        let mut phys_nodes = Vec::with_capacity(3 * m + 1);
        for k in 0..=3 * m {
            let arg = (k as f64 * lat.delta / 2.0).clamp(0.0, ell);
            phys_nodes.push(map.inverse(cs, arg)?);
        }
        let f_at_phys: Vec<f64> = phys_nodes
            .iter()
            .map(|&x| f_cum.eval_with(integrand, x))
            .collect();
        let lam_at_phys: Vec<f64> = phys_nodes.iter().map(|&x| lambda.eval(x)).collect();

        let mut lam_bar = vec![0.0; lat.len()];
        let mut psi0 = vec![0.0; lat.len()];
        for a in 0..lat.nx() {
            for c in 0..lat.ny() {
                let r_idx = a.saturating_sub(c);
                let s_idx = a + c;
                let r = phys_nodes[r_idx];
                let s = phys_nodes[s_idx];
                let idx = lat.idx(a, c);
                lam_bar[idx] =
                    normalized_reaction_with(cs, mu, r, s, t, lam_at_phys[r_idx]);
                psi0[idx] = 0.5 * (f_at_phys[a] - f_at_phys[c]);
            }
        }

        let bar_nodes = grid.nodes().map(|r| map.forward(cs, r)).collect();

        Ok(TimeContext {
            t,
            d0,
            ell,
            map,
            lambda,
            f_cum,
            lam_bar,
            psi0,
            bar_nodes,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// ψ⁰ on the lattice at every time sample.
    pub fn initial_field(&self) -> CharField {
        CharField {
            iterate: 0,
            times: self.times.clone(),
            delta: self.lattice.delta,
            m: self.lattice.m,
            slices: self.ctxs.iter().map(|c| c.psi0.clone()).collect(),
        }
    }

    /// Applies the integral operator once: ψ^{n+1} from ψⁿ.
    pub fn iterate(&self, prev: &CharField) -> Result<CharField> {
        if prev.m != self.lattice.m || prev.times.len() != self.ctxs.len() {
            return Err(Error::Shape("iterate does not match this solver's lattice".into()));
        }
        let slices = self.apply_operator(&prev.slices);
        Ok(CharField {
            iterate: prev.iterate + 1,
            times: self.times.clone(),
            delta: self.lattice.delta,
            m: self.lattice.m,
            slices,
        })
    }

    /// Time derivative of a lattice-field family at time index k, exactly
    /// zero for time-invariant coefficients.
    fn time_derivative(&self, slices: &[Vec<f64>], k: usize) -> Option<Vec<f64>> {
        if self.time_invariant || self.dt_stencils.is_empty() {
            return None;
        }
        let stencil = &self.dt_stencils[k];
        let mut out = vec![0.0; self.lattice.len()];
        for &(idx, w) in stencil {
            let src = &slices[idx];
            for (o, v) in out.iter_mut().zip(src) {
                *o += w * v;
            }
        }
        Some(out)
    }

    fn apply_operator(&self, prev: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let lat = &self.lattice;
        let (nx, ny) = (lat.nx(), lat.ny());
        let mut out = Vec::with_capacity(prev.len());
        let mut f = vec![0.0; lat.len()];
        let mut inner = vec![0.0; lat.len()];
        let mut row = vec![0.0; nx];
        let mut cells = Vec::new();
        let mut prefix = Vec::new();

        for (k, ctx) in self.ctxs.iter().enumerate() {
            let psi_t = self.time_derivative(prev, k);
            let prev_k = &prev[k];
            match &psi_t {
                None => {
                    for i in 0..lat.len() {
                        f[i] = -ctx.lam_bar[i] * prev_k[i];
                    }
                }
                Some(pt) => {
                    for i in 0..lat.len() {
                        f[i] = pt[i] - ctx.lam_bar[i] * prev_k[i];
                    }
                }
            }

            // inner[a][c] = ∫ of column a over η from 0 down to η_c
            // (positively oriented in the lattice index).
            for a in 0..nx {
                let col = &f[a * ny..(a + 1) * ny];
                cr_cell_integrals(col, lat.delta, &mut cells);
                cr_prefix(&cells, &mut prefix);
                inner[a * ny..(a + 1) * ny].copy_from_slice(&prefix);
            }

            // S2[a][c] = ∫ over ξ from 0 to ξ_a of inner(·, c); the iterate is
            //   −(S2[a][c] − S2[c][c]) / 4D₀
            // with the sign fixed by the downward η orientation.
            let mut new_slice = vec![0.0; lat.len()];
            for c in 0..ny {
                for a in 0..nx {
                    row[a] = inner[a * ny + c];
                }
                cr_cell_integrals(&row, lat.delta, &mut cells);
                cr_prefix(&cells, &mut prefix);
                let scale = -1.0 / (4.0 * ctx.d0);
                let base = prefix[c];
                for a in 0..nx {
                    new_slice[a * ny + c] = scale * (prefix[a] - base);
                }
            }
            out.push(new_slice);
        }
        out
    }

    /// Runs the series until the last iterate's max-abs drops below `tol`.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<KernelSolution> {
        let mut sum: Vec<Vec<f64>> = self.ctxs.iter().map(|c| c.psi0.clone()).collect();
        let mut prev = sum.clone();
        let mut norms = vec![max_abs(&sum)];
        let mut iterations = 1;
        let mut tail = norms[0];

        if tail >= tol {
            let mut converged = false;
            for _ in 0..max_iter {
                let next = self.apply_operator(&prev);
                tail = max_abs(&next);
                norms.push(tail);
                for (s, n) in sum.iter_mut().zip(&next) {
                    for (sv, nv) in s.iter_mut().zip(n) {
                        *sv += nv;
                    }
                }
                prev = next;
                iterations += 1;
                if tail < tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Convergence {
                    iterations,
                    tail,
                    tol,
                });
            }
        }

        let field = self.back_map(&sum)?;
        Ok(KernelSolution {
            field,
            iterations,
            tail_norm: tail,
            iterate_norms: norms,
        })
    }

    /// Maps the converged characteristic sum back to kernel samples on the
    /// grid triangle. Instead of interpolating ψ pointwise, applies the
    /// integral operator once more at the exact query points, which keeps the
    /// sampled error field C¹-smooth.
    fn back_map(&self, sum: &[Vec<f64>]) -> Result<KernelField> {
        let lat = &self.lattice;
        let (nx, ny) = (lat.nx(), lat.ny());
        let n = self.grid.n_cells();
        let mut slices = Vec::with_capacity(self.ctxs.len());

        let mut cells = Vec::new();
        let mut gprefix = Vec::new();
        let mut g = vec![0.0; nx];

        for (k, ctx) in self.ctxs.iter().enumerate() {
            // Converged integrand ψ_t − λ̄·ψ and per-column prefix tables.
            let psi_t = self.time_derivative(sum, k);
            let sum_k = &sum[k];
            let mut final_f = vec![0.0; lat.len()];
            match &psi_t {
                None => {
                    for i in 0..lat.len() {
                        final_f[i] = -ctx.lam_bar[i] * sum_k[i];
                    }
                }
                Some(pt) => {
                    for i in 0..lat.len() {
                        final_f[i] = pt[i] - ctx.lam_bar[i] * sum_k[i];
                    }
                }
            }
            let mut col_prefix = vec![0.0; lat.len()];
            for a in 0..nx {
                let col = &final_f[a * ny..(a + 1) * ny];
                cr_cell_integrals(col, lat.delta, &mut cells);
                cr_prefix(&cells, &mut gprefix);
                col_prefix[a * ny..(a + 1) * ny].copy_from_slice(&gprefix);
            }

            let mut slice = TriangularKernel::zeros(n);
            let t = ctx.t;
            for i in 0..=n {
                if i == 0 {
                    // Edge condition p(0,s,t) = 0, imposed exactly. The
                    // generic path below reproduces it to the sign of zero.
                    continue;
                }
                let r = self.grid.node(i);
                let d_r = self.cs.diffusion.value(r, t);
                for j in i..=n {
                    let s = self.grid.node(j);
                    let d_s = self.cs.diffusion.value(s, t);
                    let xi = ctx.bar_nodes[i] + ctx.bar_nodes[j];
                    let eta = ctx.bar_nodes[i] - ctx.bar_nodes[j];
                    let psi = ctx.initial_at(self.cs, self.mu, xi, eta)?
                        + self.correction(ctx, &final_f, &col_prefix, &mut g, &mut cells, &mut gprefix, xi, eta);
                    slice.set(i, j, (d_r * d_s).powf(0.25) * psi / d_s);
                }
            }
            slices.push(slice);
        }
        KernelField::from_slices(self.grid, self.times.clone(), slices)
    }

    /// One application of the integral operator to the converged integrand at
    /// an arbitrary characteristic point.
    #[allow(clippy::too_many_arguments)]
    fn correction(
        &self,
        ctx: &TimeContext<'a>,
        final_f: &[f64],
        col_prefix: &[f64],
        g: &mut [f64],
        cells: &mut Vec<f64>,
        gprefix: &mut Vec<f64>,
        xi: f64,
        eta: f64,
    ) -> f64 {
        let lat = &self.lattice;
        let (nx, ny) = (lat.nx(), lat.ny());
        let ay = (-eta / lat.delta).clamp(0.0, lat.m as f64);
        if ay == 0.0 {
            return 0.0;
        }
        let ax = (xi / lat.delta).clamp(0.0, (nx - 1) as f64);
        let bx = (-eta / lat.delta).clamp(0.0, (nx - 1) as f64);
        let hi = ax.max(bx);
        let needed = ((hi.floor() as usize) + 2).min(nx - 1);
        for (a, ga) in g.iter_mut().enumerate().take(needed + 1) {
            let col = &final_f[a * ny..(a + 1) * ny];
            let pre = &col_prefix[a * ny..(a + 1) * ny];
            *ga = cr_integral_to(col, pre, lat.delta, ay);
        }
        let gv = &g[..needed + 1];
        cr_cell_integrals(gv, lat.delta, cells);
        cr_prefix(cells, gprefix);
        let s_main = cr_integral_to(gv, gprefix, lat.delta, ax);
        let s_low = cr_integral_to(gv, gprefix, lat.delta, bx);
        -(s_main - s_low) / (4.0 * ctx.d0)
    }
}

fn max_abs(slices: &[Vec<f64>]) -> f64 {
    slices
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Three-point first-derivative stencils on a strictly increasing time list.
pub(crate) fn build_dt_stencils(t: &[f64]) -> Vec<[(usize, f64); 3]> {
    let k_max = t.len() - 1;
    (0..=k_max)
        .map(|k| {
            if k == 0 {
                let h1 = t[1] - t[0];
                let h2 = t[2] - t[1];
                [
                    (0, -(2.0 * h1 + h2) / (h1 * (h1 + h2))),
                    (1, (h1 + h2) / (h1 * h2)),
                    (2, -h1 / (h2 * (h1 + h2))),
                ]
            } else if k == k_max {
                let h1 = t[k_max] - t[k_max - 1];
                let h2 = t[k_max - 1] - t[k_max - 2];
                [
                    (k_max, (2.0 * h1 + h2) / (h1 * (h1 + h2))),
                    (k_max - 1, -(h1 + h2) / (h1 * h2)),
                    (k_max - 2, h1 / (h2 * (h1 + h2))),
                ]
            } else {
                let h1 = t[k] - t[k - 1];
                let h2 = t[k + 1] - t[k];
                [
                    (k - 1, -h2 / (h1 * (h1 + h2))),
                    (k, (h2 - h1) / (h1 * h2)),
                    (k + 1, h1 / (h2 * (h1 + h2))),
                ]
            }
        })
        .collect()
}

/// Solves the kernel equation by successive approximation.
///
/// For time-invariant coefficients the solve runs once and the slice is
/// replicated across the requested time stamps.
pub fn solve_kernel(
    cs: &CoefficientSet,
    mu: f64,
    grid: &SpatialGrid,
    t_samples: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KernelSolution> {
    if cs.kernel_time_invariant() && t_samples.len() > 1 {
        let solver = KernelSolver::new(cs, mu, grid, &t_samples[..1])?;
        let sol = solver.solve(tol, max_iter)?;
        let slice = sol.field.slice(0).clone();
        let slices = vec![slice; t_samples.len()];
        let field = KernelField::from_slices(*grid, t_samples.to_vec(), slices)?;
        return Ok(KernelSolution { field, ..sol });
    }
    let solver = KernelSolver::new(cs, mu, grid, t_samples)?;
    solver.solve(tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoeffField, Radial, Temporal, TimeFunction};
    use crate::xform::physical_coordinate;

    fn cs_with(d: CoeffField, b: CoeffField, phi: CoeffField) -> CoefficientSet {
        CoefficientSet::new(d, b, phi, TimeFunction::constant(0.0), 10.0)
    }

    fn unit_cs(phi: f64) -> CoefficientSet {
        cs_with(
            CoeffField::constant(1.0),
            CoeffField::constant(0.0),
            CoeffField::constant(phi),
        )
    }

    #[test]
    fn triangular_kernel_round_trips_and_guards() {
        let mut k = TriangularKernel::zeros(4);
        k.set(1, 3, 2.5);
        assert_eq!(k.get(1, 3), 2.5);
        assert_eq!(k.get(0, 0), 0.0);
        assert_eq!(k.max_abs(), 2.5);
    }

    #[test]
    #[should_panic(expected = "outside the triangle")]
    fn triangular_kernel_rejects_lower_triangle_reads() {
        let k = TriangularKernel::zeros(4);
        let _ = k.get(2, 1);
    }

    #[test]
    fn curvature_coef_vanishes_for_constant_diffusion() {
        for &d in &[1.0, 4.0] {
            let cs = cs_with(
                CoeffField::constant(d),
                CoeffField::constant(0.0),
                CoeffField::constant(0.0),
            );
            assert_eq!(curvature_coef(&cs, 0.3, 0.0), 0.0);
        }
    }

    #[test]
    fn curvature_coef_for_quadratic_diffusion() {
        // D = (1+r)^2: D_y/√D = 2, so the derivative term vanishes and
        // L = D_y²/(16·D·D(0)) = 1/4 everywhere.
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::constant(0.0),
            CoeffField::constant(0.0),
        );
        let l = curvature_coef(&cs, 0.5, 0.0);
        assert!((l - 0.25).abs() < 1e-13, "L = {l}");
    }

    #[test]
    fn normalized_reaction_constant_cases() {
        let cs = unit_cs(0.0);
        assert_eq!(normalized_reaction(&cs, -1.0, 0.2, 0.8, 0.0).unwrap(), 1.0);
        let cs = unit_cs(2.0);
        assert_eq!(normalized_reaction(&cs, -1.0, 0.2, 0.8, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn normalized_reaction_against_term_oracle() {
        // D = (1+r)^2 time-invariant, b = 0, phi = 0, mu = -1.
        // Oracle assembles each term from hand-written partials.
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::constant(0.0),
            CoeffField::constant(0.0),
        );
        let (r, s, mu) = (0.3, 0.7, -1.0);
        let d = |x: f64| (1.0 + x) * (1.0 + x);
        let d1 = |x: f64| 2.0 * (1.0 + x);
        let l = |y: f64| {
            // d/dy(D_y/sqrt(D)) = d/dy(2) = 0
            d1(y) * d1(y) / (16.0 * d(y) * d(0.0))
        };
        let oracle = -d1(r) * d1(r) / (8.0 * d(r)) + d1(s) * d1(s) / (8.0 * d(s))
            + d(0.0) * (l(r) - l(s))
            - (mu - 0.0);
        let got = normalized_reaction(&cs, mu, r, s, 0.0).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn char_initial_vanishes_on_the_characteristic_edge() {
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::poly(&[0.0, 1.0]),
            CoeffField::constant(1.0),
        );
        for &xi in &[0.0, 0.3, 0.9, 1.3] {
            let v = char_initial(&cs, -2.0, xi, -xi, 0.0).unwrap();
            assert_eq!(v, 0.0, "xi = {xi}");
        }
    }

    #[test]
    fn char_initial_constant_coefficient_value() {
        // D = 1, lambda = 0, mu = -1: value is −(ξ+η)/4; at (1, 0) → −0.25.
        let cs = unit_cs(0.0);
        let v = char_initial(&cs, -1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((v + 0.25).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn char_initial_matches_composed_quadrature_oracle() {
        // Independent oracle: Simpson in ξ-space composing the slow-path
        // inverse coordinate map.
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::poly(&[0.0, 0.5]),
            CoeffField::constant(1.0),
        );
        let mu = -2.0;
        let t = 0.0;
        let d0 = cs.diffusion.value(0.0, t);
        let ell = crate::xform::normalized_coordinate(&cs, 1.0, t).unwrap();
        let points = [
            (0.31, -0.11),
            (0.9, -0.4),
            (1.2, -0.05),
            (0.77, -0.6),
            (1.38, 0.0),
        ];
        for &(xi, eta) in &points {
            assert!(xi <= 2.0 * ell && eta >= -xi);
            let oracle = crate::quad::simpson(
                |tau| {
                    let r = physical_coordinate(&cs, (tau / 2.0).clamp(0.0, ell), t).unwrap();
                    (mu - cs.effective_reaction(r, t).unwrap()) / (4.0 * d0.sqrt())
                },
                -eta,
                xi,
                400,
            );
            let got = char_initial(&cs, mu, xi, eta, t).unwrap();
            assert!(
                (got - oracle).abs() < 1e-8,
                "(xi, eta) = ({xi}, {eta}): {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn iterate_collapses_on_the_zero_eta_line() {
        // ψ¹(ξ, 0) integrates over an empty inner interval and is exactly 0.
        let cs = unit_cs(0.0);
        let grid = SpatialGrid::new(20).unwrap();
        let solver = KernelSolver::new(&cs, -1.0, &grid, &[0.0]).unwrap();
        let psi0 = solver.initial_field();
        let psi1 = solver.iterate(&psi0).unwrap();
        assert_eq!(psi1.iterate, 1);
        for a in 0..psi1.n_xi() {
            assert_eq!(psi1.get(0, a, 0), 0.0, "a = {a}");
        }
        // and on the characteristic edge c = a as well
        for c in 0..psi1.n_eta() {
            assert_eq!(psi1.get(0, c, c), 0.0, "c = {c}");
        }
    }

    #[test]
    fn time_invariant_coefficients_make_time_slices_identical() {
        // With time-invariant coefficients the ψ_t term contributes exactly
        // zero, so iterates at distinct time stamps coincide bitwise.
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::poly(&[0.0, 1.0]),
            CoeffField::constant(1.0),
        );
        let grid = SpatialGrid::new(16).unwrap();
        let solver = KernelSolver::new(&cs, -2.0, &grid, &[0.0, 0.5, 1.0]).unwrap();
        let mut field = solver.initial_field();
        for _ in 0..3 {
            field = solver.iterate(&field).unwrap();
            for a in 0..field.n_xi() {
                for c in 0..field.n_eta() {
                    let v0 = field.get(0, a, c);
                    assert_eq!(v0, field.get(1, a, c));
                    assert_eq!(v0, field.get(2, a, c));
                }
            }
        }
    }

    #[test]
    fn iterate_norms_decay_monotonically_past_a_small_index() {
        // Factorial-majorant behavior: some n0 <= 10 exists past which every
        // iterate is strictly smaller than the previous one.
        let grid = SpatialGrid::new(40).unwrap();
        let cases = [
            (
                cs_with(
                    CoeffField::poly(&[1.0, 2.0, 1.0]),
                    CoeffField::poly(&[0.0, 1.0]),
                    CoeffField::constant(1.0),
                ),
                vec![0.0],
            ),
            (
                CoefficientSet::new(
                    CoeffField::separable(1.0, 0.2, Radial::One, Temporal::Sin { freq: 1.0, phase: 0.0 }),
                    CoeffField::poly(&[0.0, 0.5]),
                    CoeffField::constant(2.0),
                    TimeFunction::constant(0.0),
                    10.0,
                ),
                (0..9).map(|k| k as f64 / 8.0).collect(),
            ),
        ];
        for (case, (cs, times)) in cases.iter().enumerate() {
            let sol = solve_kernel(cs, -2.0, &grid, times, 1e-12, 50).unwrap();
            let norms = &sol.iterate_norms;
            assert!(norms.len() >= 4, "case {case} norms: {norms:?}");
            let n0 = (0..norms.len() - 1)
                .find(|&n0| (n0..norms.len() - 1).all(|m| norms[m + 1] < norms[m]))
                .unwrap_or(norms.len());
            assert!(n0 <= 10, "case {case}: decay starts at {n0}: {norms:?}");
        }
    }

    #[test]
    fn solve_kernel_zero_when_reaction_matches_target() {
        // phi ≡ mu makes μ − λ ≡ 0: ψ⁰ ≡ 0 and the series stays zero.
        let cs = unit_cs(-1.0);
        let grid = SpatialGrid::new(30).unwrap();
        let sol = solve_kernel(&cs, -1.0, &grid, &[0.0], 1e-10, 50).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.field.slice(0).max_abs(), 0.0);
    }

    #[test]
    fn solve_kernel_diagonal_matches_data_quadrature() {
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::poly(&[0.0, 1.0]),
            CoeffField::constant(1.0),
        );
        let grid = SpatialGrid::new(50).unwrap();
        let sol = solve_kernel(&cs, -2.0, &grid, &[0.0], 1e-10, 50).unwrap();
        let nodes: Vec<f64> = grid.nodes().collect();
        let diag = diagonal_profile(&cs, -2.0, 0.0, &nodes);
        for i in 0..=50 {
            let got = sol.field.slice(0).get(i, i);
            assert!(
                (got - diag[i]).abs() < 1e-8,
                "node {i}: {got} vs {}",
                diag[i]
            );
        }
    }

    #[test]
    fn solve_kernel_edge_is_exactly_zero() {
        let cs = cs_with(
            CoeffField::poly(&[1.0, 2.0, 1.0]),
            CoeffField::poly(&[0.0, 1.0]),
            CoeffField::constant(1.0),
        );
        let grid = SpatialGrid::new(40).unwrap();
        let sol = solve_kernel(&cs, -2.0, &grid, &[0.0], 1e-10, 50).unwrap();
        for j in 0..=40 {
            assert_eq!(sol.field.slice(0).get(0, j), 0.0, "j = {j}");
        }
    }

    #[test]
    fn solve_kernel_nonconvergence_reports_tail() {
        let cs = unit_cs(0.0);
        let grid = SpatialGrid::new(20).unwrap();
        let err = solve_kernel(&cs, -30.0, &grid, &[0.0], 1e-14, 1).unwrap_err();
        match err {
            Error::Convergence { iterations, tail, .. } => {
                assert_eq!(iterations, 2);
                assert!(tail > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn time_varying_solve_requires_three_samples() {
        let cs = CoefficientSet::new(
            CoeffField::separable(1.0, 0.2, Radial::One, Temporal::Sin { freq: 1.0, phase: 0.0 }),
            CoeffField::constant(0.0),
            CoeffField::constant(0.0),
            TimeFunction::constant(0.0),
            10.0,
        );
        let grid = SpatialGrid::new(20).unwrap();
        assert!(matches!(
            KernelSolver::new(&cs, -1.0, &grid, &[0.0, 1.0]),
            Err(Error::Config(_))
        ));
        assert!(KernelSolver::new(&cs, -1.0, &grid, &[0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn kernel_field_time_interpolation() {
        let grid = SpatialGrid::new(8).unwrap();
        let field = KernelField::from_fn(grid, &[0.0, 1.0], |r, s, t| r * s + t);
        let mid = field.slice_at(0.5).unwrap();
        assert!((mid.get(1, 4) - (grid.node(1) * grid.node(4) + 0.5)).abs() < 1e-14);
        assert!(field.slice_at(2.0).is_err());
    }
}
