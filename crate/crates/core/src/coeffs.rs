//! Problem data for the observer design.
//!
//! A [`CoefficientSet`] holds the diffusion, advection, and reaction fields of
//! the plant together with the known boundary input U(t). Fields come from a
//! closed family of analytic forms
//!
//! ```text
//! f(r, t) = offset + amplitude · radial(r) · temporal(t)
//! ```
//!
//! so every partial (f_r, f_rr, f_t, f_rt) is exact. The advection term is
//! removed from the plant by an exponential gauge change of state; what this
//! module computes are the data of the advection-free form:
//!
//! * the effective reaction coefficient
//!   λ(r,t) = φ(r,t) − b²/4D − b_r/2 + b·D_r/2D + ½∫₀ʳ ∂_t(b/D) dτ,
//! * the transformed boundary input M(t) = U(t)·exp(∫₀¹ b/2D dτ) and the
//!   Robin slope H(t) = 1 + b(1,t)/2D(1,t),
//! * the strict upper bound on the target decay coefficient μ under which the
//!   target system is exponentially stable in L²(0,1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::quad::{simpson, CumulativeSimpson, DEFAULT_CELLS};

/// Radial factor of an analytic field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radial {
    #[default]
    One,
    /// c₀ + c₁·r + c₂·r² + ...
    Poly(Vec<f64>),
    Sin {
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    Cos {
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Radial {
    fn value(&self, r: f64) -> f64 {
        match self {
            Radial::One => 1.0,
            Radial::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * r + ck),
            Radial::Sin { freq, phase } => (freq * r + phase).sin(),
            Radial::Cos { freq, phase } => (freq * r + phase).cos(),
        }
    }

    fn deriv1(&self, r: f64) -> f64 {
        match self {
            Radial::One => 0.0,
            Radial::Poly(c) => {
                let mut acc = 0.0;
                for k in (1..c.len()).rev() {
                    acc = acc * r + k as f64 * c[k];
                }
                acc
            }
            Radial::Sin { freq, phase } => freq * (freq * r + phase).cos(),
            Radial::Cos { freq, phase } => -freq * (freq * r + phase).sin(),
        }
    }

    fn deriv2(&self, r: f64) -> f64 {
        match self {
            Radial::One => 0.0,
            Radial::Poly(c) => {
                let mut acc = 0.0;
                for k in (2..c.len()).rev() {
                    acc = acc * r + (k * (k - 1)) as f64 * c[k];
                }
                acc
            }
            Radial::Sin { freq, phase } => -freq * freq * (freq * r + phase).sin(),
            Radial::Cos { freq, phase } => -freq * freq * (freq * r + phase).cos(),
        }
    }
}

/// Temporal factor of an analytic field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    #[default]
    One,
    Sin {
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    Cos {
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Temporal {
    fn value(&self, t: f64) -> f64 {
        match self {
            Temporal::One => 1.0,
            Temporal::Sin { freq, phase } => (freq * t + phase).sin(),
            Temporal::Cos { freq, phase } => (freq * t + phase).cos(),
        }
    }

    fn deriv1(&self, t: f64) -> f64 {
        match self {
            Temporal::One => 0.0,
            Temporal::Sin { freq, phase } => freq * (freq * t + phase).cos(),
            Temporal::Cos { freq, phase } => -freq * (freq * t + phase).sin(),
        }
    }
}

/// Scalar field on [0,1] × [0,T] with exact analytic partials.
///
/// The optional overrides replace single partials for fault-injection tests;
/// `validate` compares whatever partial the field reports against centered
/// finite differences of its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffField {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub radial: Radial,
    #[serde(default)]
    pub temporal: Temporal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_d_r: Option<Box<CoeffField>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_d_t: Option<Box<CoeffField>>,
}

impl Default for CoeffField {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl CoeffField {
    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            amplitude: 0.0,
            radial: Radial::One,
            temporal: Temporal::One,
            override_d_r: None,
            override_d_t: None,
        }
    }

    /// c₀ + c₁ r + c₂ r² + ...
    pub fn poly(coeffs: &[f64]) -> Self {
        Self {
            offset: 0.0,
            amplitude: 1.0,
            radial: Radial::Poly(coeffs.to_vec()),
            temporal: Temporal::One,
            override_d_r: None,
            override_d_t: None,
        }
    }

    pub fn separable(offset: f64, amplitude: f64, radial: Radial, temporal: Temporal) -> Self {
        Self {
            offset,
            amplitude,
            radial,
            temporal,
            override_d_r: None,
            override_d_t: None,
        }
    }

    pub fn value(&self, r: f64, t: f64) -> f64 {
        self.offset + self.amplitude * self.radial.value(r) * self.temporal.value(t)
    }

    pub fn d_r(&self, r: f64, t: f64) -> f64 {
        if let Some(f) = &self.override_d_r {
            return f.value(r, t);
        }
        self.amplitude * self.radial.deriv1(r) * self.temporal.value(t)
    }

    pub fn d_rr(&self, r: f64, t: f64) -> f64 {
        self.amplitude * self.radial.deriv2(r) * self.temporal.value(t)
    }

    pub fn d_t(&self, r: f64, t: f64) -> f64 {
        if let Some(f) = &self.override_d_t {
            return f.value(r, t);
        }
        self.amplitude * self.radial.value(r) * self.temporal.deriv1(t)
    }

    pub fn d_rt(&self, r: f64, t: f64) -> f64 {
        self.amplitude * self.radial.deriv1(r) * self.temporal.deriv1(t)
    }

    /// True when the field values do not depend on t.
    pub fn is_time_invariant(&self) -> bool {
        self.amplitude == 0.0 || self.temporal == Temporal::One
    }

    /// True when ∂_t of this field is identically zero as evaluated,
    /// including any override.
    fn time_derivative_vanishes(&self) -> bool {
        self.override_d_t.is_none() && self.is_time_invariant()
    }

    fn is_identically_zero(&self) -> bool {
        self.offset == 0.0 && self.amplitude == 0.0
    }
}

/// Known boundary input U(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeFunction {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub temporal: Temporal,
}

impl Default for TimeFunction {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl TimeFunction {
    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            amplitude: 0.0,
            temporal: Temporal::One,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.offset + self.amplitude * self.temporal.value(t)
    }
}

/// Boundary data of the advection-free form at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    /// M(t): boundary input scaled by the gauge factor at r = 1.
    pub transformed_input: f64,
    /// H(t): Robin slope coefficient at r = 1.
    pub robin_slope: f64,
}

/// Coefficients of the plant and its boundary input over a finite horizon.
///
/// Immutable after construction; all evaluation methods are pure, so a set can
/// be shared freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub diffusion: CoeffField,
    pub advection: CoeffField,
    pub reaction: CoeffField,
    pub input: TimeFunction,
    /// Simulation horizon T in seconds.
    pub horizon: f64,
}

const DOMAIN_EPS: f64 = 1e-9;

impl CoefficientSet {
    pub fn new(
        diffusion: CoeffField,
        advection: CoeffField,
        reaction: CoeffField,
        input: TimeFunction,
        horizon: f64,
    ) -> Self {
        Self {
            diffusion,
            advection,
            reaction,
            input,
            horizon,
        }
    }

    fn check_domain(&self, r: f64, t: f64) -> Result<()> {
        if !(-DOMAIN_EPS..=1.0 + DOMAIN_EPS).contains(&r) {
            return Err(Error::Domain(format!("r = {r} outside [0, 1]")));
        }
        if !(-DOMAIN_EPS..=self.horizon + DOMAIN_EPS).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// ∂_t(b/D) at (r, t), the integrand of the time-correction term in the
    /// effective reaction coefficient.
    pub(crate) fn gauge_time_deriv(&self, r: f64, t: f64) -> f64 {
        let d = self.diffusion.value(r, t);
        let b = self.advection.value(r, t);
        (self.advection.d_t(r, t) * d - b * self.diffusion.d_t(r, t)) / (d * d)
    }

    /// True when b/D has no time dependence, so the integral term of the
    /// effective reaction coefficient vanishes identically.
    pub fn gauge_time_invariant(&self) -> bool {
        self.advection.time_derivative_vanishes() && self.diffusion.time_derivative_vanishes()
    }

    /// True when none of D, b, φ depend on t (the kernel is then steady).
    pub fn kernel_time_invariant(&self) -> bool {
        self.diffusion.is_time_invariant()
            && self.advection.is_time_invariant()
            && self.reaction.is_time_invariant()
    }

    /// True when the advection field is identically zero (gauge factor ≡ 1).
    pub fn advection_free(&self) -> bool {
        self.advection.is_identically_zero()
    }

    /// Effective reaction coefficient λ(r, t) of the advection-free form.
    pub fn effective_reaction(&self, r: f64, t: f64) -> Result<f64> {
        self.effective_reaction_refined(r, t, DEFAULT_CELLS)
    }

    /// Same as [`effective_reaction`](Self::effective_reaction) with an
    /// explicit quadrature cell count for the time-correction integral.
    pub fn effective_reaction_refined(&self, r: f64, t: f64, cells: usize) -> Result<f64> {
        self.check_domain(r, t)?;
        let d = self.diffusion.value(r, t);
        let b = self.advection.value(r, t);
        let pointwise = self.reaction.value(r, t) - b * b / (4.0 * d)
            - self.advection.d_r(r, t) / 2.0
            + b * self.diffusion.d_r(r, t) / (2.0 * d);
        let integral = if self.gauge_time_invariant() || r == 0.0 {
            0.0
        } else {
            let n = ((r * cells as f64).ceil() as usize).max(1);
            simpson(|tau| self.gauge_time_deriv(tau, t), 0.0, r, n)
        };
        let lam = pointwise + 0.5 * integral;
        if !lam.is_finite() {
            return Err(Error::Numerical(format!(
                "effective reaction coefficient is not finite at (r={r}, t={t})"
            )));
        }
        Ok(lam)
    }

    /// Effective reaction coefficient with a Richardson error estimate for
    /// the quadrature of the time-correction term. Errors out when the
    /// estimate exceeds the tolerance.
    pub fn effective_reaction_with_estimate(&self, r: f64, t: f64) -> Result<(f64, f64)> {
        let fine = self.effective_reaction_refined(r, t, DEFAULT_CELLS)?;
        let coarse = self.effective_reaction_refined(r, t, DEFAULT_CELLS / 2)?;
        // Composite Simpson is O(h^4): the h vs 2h difference over 15
        // estimates the fine-step error.
        let estimate = (fine - coarse).abs() / 15.0;
        let tol = 1e-8 * (1.0 + fine.abs());
        if estimate > tol {
            return Err(Error::Numerical(format!(
                "quadrature for the effective reaction coefficient did not converge \
                 (estimate {estimate:.3e} > tolerance {tol:.3e})"
            )));
        }
        Ok((fine, estimate))
    }

    /// Transformed boundary input M(t) and Robin slope H(t).
    pub fn boundary_data(&self, t: f64) -> Result<BoundaryData> {
        self.check_domain(0.0, t)?;
        let exponent = if self.advection_free() {
            0.0
        } else {
            simpson(
                |tau| self.advection.value(tau, t) / (2.0 * self.diffusion.value(tau, t)),
                0.0,
                1.0,
                DEFAULT_CELLS,
            )
        };
        let m = self.input.value(t) * exponent.exp();
        let h = 1.0 + self.advection.value(1.0, t) / (2.0 * self.diffusion.value(1.0, t));
        if !m.is_finite() || !h.is_finite() {
            return Err(Error::Numerical(format!(
                "boundary data is not finite at t = {t}"
            )));
        }
        Ok(BoundaryData {
            transformed_input: m,
            robin_slope: h,
        })
    }

    /// Strict upper bound on admissible μ:
    /// −(max|D_rr|/2 + D_m²/min D), max/min over the sampled grid × times,
    /// D_m = max over times of max{0, −(D(1,t)+D_r(1,t))/2}.
    pub fn mu_admissible_bound(&self, grid: &SpatialGrid, t_samples: &[f64]) -> Result<f64> {
        if grid.n_cells() == 0 || t_samples.is_empty() {
            return Err(Error::Config(
                "mu bound requires a non-empty grid and at least one time sample".into(),
            ));
        }
        let mut max_drr = 0.0f64;
        let mut min_d = f64::INFINITY;
        let mut d_m = 0.0f64;
        for &t in t_samples {
            for r in grid.nodes() {
                max_drr = max_drr.max(self.diffusion.d_rr(r, t).abs());
                min_d = min_d.min(self.diffusion.value(r, t));
            }
            let edge = -(self.diffusion.value(1.0, t) + self.diffusion.d_r(1.0, t)) / 2.0;
            d_m = d_m.max(edge.max(0.0));
        }
        if min_d <= 0.0 {
            return Err(Error::Invariant(format!(
                "diffusion coefficient must stay positive (sampled minimum {min_d:.6e})"
            )));
        }
        // The +0.0 folds a negative zero into plain zero.
        Ok(-(max_drr / 2.0 + d_m * d_m / min_d) + 0.0)
    }

    /// Positivity and partial-consistency report over a validation lattice.
    pub fn validate(&self, grid: &SpatialGrid, t_samples: &[f64]) -> ValidationReport {
        let mut min_d = f64::INFINITY;
        let mut min_at = (0.0, 0.0);
        for &t in t_samples {
            for r in grid.nodes() {
                let d = self.diffusion.value(r, t);
                if d < min_d {
                    min_d = d;
                    min_at = (r, t);
                }
            }
        }

        let h = 1e-3;
        let mut checks = Vec::new();
        let fields: [(&str, &CoeffField); 2] =
            [("diffusion", &self.diffusion), ("advection", &self.advection)];
        for (name, field) in fields {
            checks.push(self.partial_check(name, "d_r", field, t_samples, h, |f, r, t| {
                (f.d_r(r, t), (f.value(r + h, t) - f.value(r - h, t)) / (2.0 * h))
            }));
            checks.push(self.partial_check(name, "d_t", field, t_samples, h, |f, r, t| {
                (f.d_t(r, t), (f.value(r, t + h) - f.value(r, t - h)) / (2.0 * h))
            }));
        }
        checks.push(self.partial_check(
            "diffusion",
            "d_rr",
            &self.diffusion,
            t_samples,
            h,
            |f, r, t| {
                (
                    f.d_rr(r, t),
                    (f.value(r + h, t) - 2.0 * f.value(r, t) + f.value(r - h, t)) / (h * h),
                )
            },
        ));
        checks.push(self.partial_check(
            "diffusion",
            "d_rt",
            &self.diffusion,
            t_samples,
            h,
            |f, r, t| {
                (
                    f.d_rt(r, t),
                    (f.value(r + h, t + h) - f.value(r + h, t - h) - f.value(r - h, t + h)
                        + f.value(r - h, t - h))
                        / (4.0 * h * h),
                )
            },
        ));

        ValidationReport {
            min_diffusion: min_d,
            min_diffusion_at: min_at,
            partial_checks: checks,
        }
    }

    fn partial_check(
        &self,
        field_name: &str,
        partial_name: &str,
        field: &CoeffField,
        t_samples: &[f64],
        h: f64,
        eval: impl Fn(&CoeffField, f64, f64) -> (f64, f64),
    ) -> PartialCheck {
        let mut max_disc = 0.0f64;
        let mut scale = 1.0f64;
        for &t in t_samples {
            // Keep the centered stencils inside the (r, t) domain.
            let t = t.clamp(h, (self.horizon - h).max(h));
            let mut r = h;
            while r <= 1.0 - h + 1e-12 {
                let (analytic, numeric) = eval(field, r, t);
                max_disc = max_disc.max((analytic - numeric).abs());
                scale = scale.max(analytic.abs());
                r += 0.05;
            }
        }
        let tolerance = 1e-4 * scale;
        PartialCheck {
            field: field_name.to_string(),
            partial: partial_name.to_string(),
            max_discrepancy: max_disc,
            tolerance,
            ok: max_disc <= tolerance,
        }
    }
}

/// Outcome of one analytic-vs-finite-difference partial comparison.
#[derive(Debug, Clone, Serialize)]
pub struct PartialCheck {
    pub field: String,
    pub partial: String,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub ok: bool,
}

/// Report from [`CoefficientSet::validate`]. Failures are carried, not raised.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub min_diffusion: f64,
    pub min_diffusion_at: (f64, f64),
    pub partial_checks: Vec<PartialCheck>,
}

impl ValidationReport {
    pub fn positivity_ok(&self) -> bool {
        self.min_diffusion > 0.0
    }

    pub fn passed(&self) -> bool {
        self.positivity_ok() && self.partial_checks.iter().all(|c| c.ok)
    }

    /// Names of the checks that failed, for diagnostics.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.positivity_ok() {
            out.push(format!(
                "diffusion positivity (min {:.6e} at r={:.3}, t={:.3})",
                self.min_diffusion, self.min_diffusion_at.0, self.min_diffusion_at.1
            ));
        }
        for c in &self.partial_checks {
            if !c.ok {
                out.push(format!(
                    "{}.{} (discrepancy {:.3e} > tol {:.3e})",
                    c.field, c.partial, c.max_discrepancy, c.tolerance
                ));
            }
        }
        out
    }
}

/// Target decay coefficient μ of the stable target system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams {
    pub mu: f64,
}

impl TargetParams {
    /// Constructs without admissibility checking (the kernel exists for any μ).
    pub fn new(mu: f64) -> Self {
        Self { mu }
    }

    /// Constructs only if μ satisfies the strict decay inequality on the
    /// sampled grid and horizon.
    pub fn checked(
        mu: f64,
        cs: &CoefficientSet,
        grid: &SpatialGrid,
        t_samples: &[f64],
    ) -> Result<Self> {
        let bound = cs.mu_admissible_bound(grid, t_samples)?;
        if mu < bound {
            Ok(Self { mu })
        } else {
            Err(Error::Invariant(format!(
                "mu = {mu} is not admissible (requires mu < {bound})"
            )))
        }
    }
}

/// Evaluator for the effective reaction coefficient at one frozen time.
///
/// When b/D depends on t the integral term is tabulated once, which makes
/// per-node evaluation O(1) inside the kernel solver and the steppers.
pub struct EffectiveReactionTable<'a> {
    cs: &'a CoefficientSet,
    t: f64,
    cum: Option<CumulativeSimpson>,
}

impl<'a> EffectiveReactionTable<'a> {
    pub fn new(cs: &'a CoefficientSet, t: f64) -> Self {
        let cum = if cs.gauge_time_invariant() {
            None
        } else {
            Some(CumulativeSimpson::build(
                |tau| cs.gauge_time_deriv(tau, t),
                0.0,
                1.0,
                DEFAULT_CELLS,
            ))
        };
        Self { cs, t, cum }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let t = self.t;
        let d = self.cs.diffusion.value(r, t);
        let b = self.cs.advection.value(r, t);
        let pointwise = self.cs.reaction.value(r, t) - b * b / (4.0 * d)
            - self.cs.advection.d_r(r, t) / 2.0
            + b * self.cs.diffusion.d_r(r, t) / (2.0 * d);
        let integral = match &self.cum {
            None => 0.0,
            Some(cum) => cum.eval_with(|tau| self.cs.gauge_time_deriv(tau, t), r),
        };
        pointwise + 0.5 * integral
    }
}
