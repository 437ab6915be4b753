//! Time integration of the plant, observer, error, and target systems.
//!
//! All steppers use Crank-Nicolson with coefficients frozen at t + Δt/2,
//! which keeps the linear solve tridiagonal and the interior accuracy at
//! O(Δt² + h²). Output-injection terms are treated explicitly (evaluated at
//! the step's start), so the system matrix never couples to the boundary
//! mismatch. Robin conditions enter through a second-order one-sided 3-point
//! stencil in the last row; its reach-back entry is folded into the adjacent
//! row to preserve the tridiagonal structure.
//!
//! The observer reads exactly one scalar measurement per step, the gauged
//! boundary value c(1,t); the signature enforces that.

use serde::Serialize;

use crate::coeffs::CoefficientSet;
use crate::coeffs::EffectiveReactionTable;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::gains::{compute_gains, ObserverGains};
use crate::grid::{FieldLabel, StateField};
use crate::kernel::{kernel_residual, solve_kernel, ResidualReport};
use crate::xform::{gauge_end_factor, gauge_forward, gauge_inverse, volterra_invert};

/// Robin condition at r = 1 for the new time level:
/// (3v_n − 4v_{n−1} + v_{n−2})/(2h) = slope·v_n + rhs.
struct RobinBc {
    slope: f64,
    rhs: f64,
}

/// Solves a tridiagonal system in place (Thomas algorithm).
fn thomas(sub: &[f64], dia: &mut [f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = dia.len();
    for i in 1..n {
        if dia[i - 1].abs() < 1e-300 {
            return Err(Error::Numerical(format!(
                "tridiagonal solve breakdown at row {}",
                i - 1
            )));
        }
        let w = sub[i] / dia[i - 1];
        dia[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if dia[n - 1].abs() < 1e-300 {
        return Err(Error::Numerical("tridiagonal solve breakdown at last row".into()));
    }
    rhs[n - 1] /= dia[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / dia[i];
    }
    Ok(())
}

/// One Crank-Nicolson step of v_t = D v_rr + b v_r + q v + src with v(0) = 0
/// and a Robin condition at r = 1.
#[allow(clippy::too_many_arguments)]
fn cn_step(
    state: &StateField,
    dt: f64,
    diffusion: &dyn Fn(f64) -> f64,
    advection: &dyn Fn(f64) -> f64,
    reaction: &dyn Fn(f64) -> f64,
    source: &dyn Fn(usize) -> f64,
    bc: RobinBc,
    label: FieldLabel,
) -> Result<StateField> {
    let grid = state.grid;
    let n = grid.n_cells();
    if n < 3 {
        return Err(Error::Config("stepping needs a grid of at least 3 cells".into()));
    }
    let h = grid.spacing();
    let u = &state.values;

    let mut sub = vec![0.0; n + 1];
    let mut dia = vec![0.0; n + 1];
    let mut sup = vec![0.0; n + 1];
    let mut rhs = vec![0.0; n + 1];

    // Left Dirichlet row.
    dia[0] = 1.0;
    rhs[0] = 0.0;

    for i in 1..n {
        let r = grid.node(i);
        let d = diffusion(r);
        let b = advection(r);
        let q = reaction(r);
        let diff = d / (h * h);
        let adv = b / (2.0 * h);
        sub[i] = -(0.5 * dt) * (diff - adv);
        dia[i] = 1.0 + dt * diff - 0.5 * dt * q;
        sup[i] = -(0.5 * dt) * (diff + adv);
        let lu = diff * (u[i + 1] - 2.0 * u[i] + u[i - 1]) + adv * (u[i + 1] - u[i - 1]) + q * u[i];
        rhs[i] = u[i] + 0.5 * dt * lu + dt * source(i);
    }

    // Robin row: v_{n−2} − 4v_{n−1} + (3 − 2h·slope)v_n = 2h·rhs. Fold the
    // reach-back v_{n−2} entry into row n−1 to stay tridiagonal.
    let reach = 1.0;
    let fold = reach / sub[n - 1];
    if !fold.is_finite() {
        return Err(Error::Numerical(
            "cannot fold the boundary stencil: degenerate interior row".into(),
        ));
    }
    sub[n] = -4.0 - fold * dia[n - 1];
    dia[n] = (3.0 - 2.0 * h * bc.slope) - fold * sup[n - 1];
    sup[n] = 0.0;
    rhs[n] = 2.0 * h * bc.rhs - fold * rhs[n - 1];

    thomas(&sub, &mut dia, &sup, &mut rhs)?;
    StateField::new(grid, rhs, state.time + dt, label)
}

fn expect_label(state: &StateField, want: FieldLabel, op: &str) -> Result<()> {
    if state.label != want {
        return Err(Error::Config(format!(
            "{op} expects a state labeled {} but got {}",
            want.as_str(),
            state.label.as_str()
        )));
    }
    Ok(())
}

/// Advances the plant u_t = D u_rr + b u_r + φ u, u(0) = 0,
/// u_r(1) = u(1) + U(t).
pub fn step_plant(state: &StateField, cs: &CoefficientSet, dt: f64) -> Result<StateField> {
    expect_label(state, FieldLabel::U, "step_plant")?;
    let t_mid = state.time + 0.5 * dt;
    let t_new = state.time + dt;
    cn_step(
        state,
        dt,
        &|r| cs.diffusion.value(r, t_mid),
        &|r| cs.advection.value(r, t_mid),
        &|r| cs.reaction.value(r, t_mid),
        &|_| 0.0,
        RobinBc {
            slope: 1.0,
            rhs: cs.input.value(t_new),
        },
        FieldLabel::U,
    )
}

/// Advances the gauged plant c_t = D c_rr + λ c, c(0) = 0,
/// c_r(1) = H(t)c(1) + M(t).
pub fn step_transformed(state: &StateField, cs: &CoefficientSet, dt: f64) -> Result<StateField> {
    expect_label(state, FieldLabel::C, "step_transformed")?;
    let t_mid = state.time + 0.5 * dt;
    let t_new = state.time + dt;
    let lambda = EffectiveReactionTable::new(cs, t_mid);
    let bd = cs.boundary_data(t_new)?;
    cn_step(
        state,
        dt,
        &|r| cs.diffusion.value(r, t_mid),
        &|_| 0.0,
        &|r| lambda.eval(r),
        &|_| 0.0,
        RobinBc {
            slope: bd.robin_slope,
            rhs: bd.transformed_input,
        },
        FieldLabel::C,
    )
}

/// Advances the observer estimate, driven by the single boundary measurement
/// y = c(1, t). The injection terms use gains and mismatch at the step start.
pub fn step_observer(
    state: &StateField,
    cs: &CoefficientSet,
    gains: &ObserverGains,
    measurement: f64,
    dt: f64,
) -> Result<StateField> {
    expect_label(state, FieldLabel::CHat, "step_observer")?;
    let t_mid = state.time + 0.5 * dt;
    let t_new = state.time + dt;
    let lambda = EffectiveReactionTable::new(cs, t_mid);
    let bd = cs.boundary_data(t_new)?;
    let sample = gains.at(state.time)?;
    let mismatch = measurement - state.boundary_value();
    cn_step(
        state,
        dt,
        &|r| cs.diffusion.value(r, t_mid),
        &|_| 0.0,
        &|r| lambda.eval(r),
        &|i| sample.p1(i) * mismatch,
        RobinBc {
            slope: bd.robin_slope,
            rhs: bd.transformed_input + sample.p10 * mismatch,
        },
        FieldLabel::CHat,
    )
}

/// Advances the autonomous estimation-error system.
pub fn step_error(
    state: &StateField,
    cs: &CoefficientSet,
    gains: &ObserverGains,
    dt: f64,
) -> Result<StateField> {
    expect_label(state, FieldLabel::CTilde, "step_error")?;
    let t_mid = state.time + 0.5 * dt;
    let t_new = state.time + dt;
    let lambda = EffectiveReactionTable::new(cs, t_mid);
    let bd = cs.boundary_data(t_new)?;
    let sample = gains.at(state.time)?;
    let edge = state.boundary_value();
    cn_step(
        state,
        dt,
        &|r| cs.diffusion.value(r, t_mid),
        &|_| 0.0,
        &|r| lambda.eval(r),
        &|i| -sample.p1(i) * edge,
        RobinBc {
            slope: bd.robin_slope,
            rhs: -sample.p10 * edge,
        },
        FieldLabel::CTilde,
    )
}

/// Advances the stable target system w_t = D w_rr + μ w, w(0) = 0,
/// w_r(1) = −w(1)/2.
pub fn step_target(state: &StateField, cs: &CoefficientSet, mu: f64, dt: f64) -> Result<StateField> {
    expect_label(state, FieldLabel::WTilde, "step_target")?;
    let t_mid = state.time + 0.5 * dt;
    cn_step(
        state,
        dt,
        &|r| cs.diffusion.value(r, t_mid),
        &|_| 0.0,
        &|_| mu,
        &|_| 0.0,
        RobinBc {
            slope: -0.5,
            rhs: 0.0,
        },
        FieldLabel::WTilde,
    )
}

/// Lyapunov energy W = ½ ∫₀¹ w² dr by trapezoid quadrature.
pub fn lyapunov_energy(state: &StateField) -> f64 {
    let n = state.l2_norm();
    0.5 * n * n
}

/// Fitted exponential decay of a norm series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    /// Slope of the least-squares line through (t, ln‖·‖).
    pub sigma: f64,
    /// RMS residual of the line fit.
    pub residual: f64,
    /// Set when the series reached round-off inside the fit window.
    pub converged: bool,
    /// Number of samples used for the fit.
    pub samples: usize,
}

/// Least-squares exponential fit of a norm series; the window drops the
/// first 10% of the horizon as transient.
pub fn fit_decay(times: &[f64], norms: &[f64]) -> Result<DecayFit> {
    if times.len() != norms.len() {
        return Err(Error::Shape("times and norms must have equal length".into()));
    }
    if times.len() < 10 {
        return Err(Error::Config(format!(
            "decay fit needs at least 10 samples, got {}",
            times.len()
        )));
    }
    let t0 = times[0];
    let t_end = *times.last().expect("non-empty");
    let window_start = t0 + 0.1 * (t_end - t0);
    let floor = 1e-13 * norms.iter().fold(1.0f64, |m, &v| m.max(v));

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut converged = false;
    for (&t, &v) in times.iter().zip(norms) {
        if t < window_start {
            continue;
        }
        if v <= floor {
            converged = true;
            continue;
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < 2 {
        return Ok(DecayFit {
            sigma: 0.0,
            residual: 0.0,
            converged: true,
            samples: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Numerical("degenerate time window for the decay fit".into()));
    }
    let sigma = (n * sxy - sx * sy) / denom;
    let intercept = (sy - sigma * sx) / n;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + sigma * x);
            e * e
        })
        .sum();
    Ok(DecayFit {
        sigma,
        residual: (ss / n).sqrt(),
        converged,
        samples: xs.len(),
    })
}

/// State snapshots at one recording time, reported in plant coordinates.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub plant_u: StateField,
    /// Observer estimate mapped back through the gauge (estimate of u).
    pub estimate_u: StateField,
    /// Estimation error in gauged coordinates.
    pub error_c: StateField,
}

/// Full output of one estimation scenario.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    /// ‖c̃(t)‖ in L²(0,1).
    pub error_norm: Vec<f64>,
    /// ‖w̃(t)‖ via the inverse Volterra transform.
    pub target_norm: Vec<f64>,
    /// Lyapunov energy of the mapped error.
    pub lyapunov: Vec<f64>,
    pub decay: DecayFit,
    pub snapshots: Vec<Snapshot>,
    pub gains: ObserverGains,
    pub kernel_iterations: usize,
    pub kernel_tail: f64,
    pub kernel_residual: ResidualReport,
    pub mu: f64,
    pub mu_bound: f64,
    pub warnings: Vec<String>,
}

fn subtract(a: &StateField, b: &StateField, label: FieldLabel) -> Result<StateField> {
    if a.grid != b.grid {
        return Err(Error::Shape("state subtraction needs matching grids".into()));
    }
    StateField::new(
        a.grid,
        a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        a.time,
        label,
    )
}

/// Runs the full pipeline: validate, solve the kernel, extract gains,
/// co-simulate plant and observer, record norms and the fitted decay rate.
/// Deterministic for a fixed config (the seed drives random initial data).
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationResult> {
    config.validate()?;
    let cs = config.coefficient_set();
    let grid = config.spatial_grid()?;
    let mut warnings = Vec::new();

    // Stage: coefficient validation.
    let bound_times: Vec<f64> = (0..=32)
        .map(|k| k as f64 * config.time.horizon / 32.0)
        .collect();
    let report = cs.validate(&grid, &bound_times);
    if !report.passed() {
        return Err(Error::Invariant(format!(
            "coefficient validation failed: {}",
            report.failures().join("; ")
        )));
    }

    let mu_bound = cs.mu_admissible_bound(&grid, &bound_times)?;
    let mu = config.resolve_mu(mu_bound);
    if mu >= mu_bound {
        warnings.push(format!(
            "mu = {mu} is not strictly below the admissible bound {mu_bound}; \
             the kernel exists but target decay is not guaranteed"
        ));
    }

    // Stage: kernel solve and gains.
    let kernel_times = config.kernel_times(&cs);
    let solution = solve_kernel(
        &cs,
        mu,
        &grid,
        &kernel_times,
        config.solver.tol,
        config.solver.max_iter,
    )
    .map_err(|e| e.with_stage("kernel"))?;
    let gains = compute_gains(&solution.field, &cs).map_err(|e| e.with_stage("gains"))?;
    let residual = kernel_residual(&solution.field, &cs, mu).map_err(|e| e.with_stage("kernel"))?;

    // Stage: co-simulation.
    let dt = config.time.dt;
    let steps = (config.time.horizon / dt).round() as usize;
    let n = grid.n_cells();
    let gauge_static = cs.gauge_time_invariant();
    let gauge_end0 = gauge_end_factor(&cs, 0.0)?;

    let mut u = config
        .initial_conditions
        .plant
        .sample(&grid, 0.0, FieldLabel::U, config.seed)?;
    let mut c_hat = config
        .initial_conditions
        .observer
        .sample(&grid, 0.0, FieldLabel::CHat, config.seed.wrapping_add(1))?;

    let mut times = Vec::new();
    let mut error_norm = Vec::new();
    let mut target_norm = Vec::new();
    let mut lyapunov = Vec::new();
    let mut snapshots = Vec::new();

    let snapshot_every = if config.output.states && config.output.snapshots > 1 {
        (steps / (config.output.snapshots - 1)).max(1)
    } else {
        usize::MAX
    };

    let mut record = |u: &StateField, c_hat: &StateField, take_snapshot: bool| -> Result<()> {
        let c = gauge_forward(u, &cs)?;
        let c_tilde = subtract(&c, c_hat, FieldLabel::CTilde)?;
        let w_tilde = volterra_invert(&solution.field, &c_tilde)?;
        times.push(u.time);
        error_norm.push(c_tilde.l2_norm());
        target_norm.push(w_tilde.l2_norm());
        lyapunov.push(lyapunov_energy(&w_tilde));
        if take_snapshot {
            snapshots.push(Snapshot {
                plant_u: u.clone(),
                estimate_u: gauge_inverse(c_hat, &cs)?,
                error_c: c_tilde,
            });
        }
        Ok(())
    };

    record(&u, &c_hat, config.output.states)?;
    for step in 0..steps {
        let t = u.time;
        let gauge_end = if gauge_static {
            gauge_end0
        } else {
            gauge_end_factor(&cs, t)?
        };
        let measurement = u.values[n] * gauge_end;
        let u_next = step_plant(&u, &cs, dt).map_err(|e| e.with_stage("plant"))?;
        let c_hat_next = step_observer(&c_hat, &cs, &gains, measurement, dt)
            .map_err(|e| e.with_stage("observer"))?;
        u = u_next;
        c_hat = c_hat_next;
        let done = step + 1 == steps;
        if (step + 1) % config.output.decimate == 0 || done {
            let snap = config.output.states && ((step + 1) % snapshot_every == 0 || done);
            record(&u, &c_hat, snap)?;
        }
    }

    let decay = fit_decay(&times, &error_norm)?;

    Ok(SimulationResult {
        times,
        error_norm,
        target_norm,
        lyapunov,
        decay,
        snapshots,
        gains,
        kernel_iterations: solution.iterations,
        kernel_tail: solution.tail_norm,
        kernel_residual: residual,
        mu,
        mu_bound,
        warnings,
    })
}
