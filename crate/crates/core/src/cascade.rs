//! Truncated-flux problems `v^K` and their behaviour as the clamp `K` grows.
//!
//! Each `v^K` solves the equation with `g` replaced by the slope-clamped
//! `g_K`. This module runs a schedule of clamps, measures Cauchy gaps and
//! order in `K`, dominates `v^K` by a linear Robin supersolution, and checks
//! the energy, smoothing, trace and continuity estimates along trajectories.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, InequalityReport};
use crate::integrator::{self, RobinLinearProblem, Status, StepConfig, Trajectory};
use crate::nonlinearity::{Nonlinearity, Problem};

/// Constants of the `L^σ` energy inequality
/// `(1/σ) d/dt ‖u‖^σ + (2(σ-1)/σ²) ∫|∇|u|^{σ/2}|² + A ‖u‖^{σ+p-1}_{σ+p-1} <= B`
/// and of the derived scalar inequality `y' <= β - γ y^{(σ+p-1)/σ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub sigma: f64,
    /// Absorption exponent of `f`.
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EnergyConstants {
    /// `β = σB`, `γ = σA|Ω|^{-(p-1)/σ}` (Hölder on a domain of measure `|Ω|`).
    pub fn new(sigma: f64, p: f64, a: f64, b: f64, omega_measure: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && sigma >= 1.0 && p > 1.0 && omega_measure > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "energy constants need A, B > 0, sigma >= 1, p > 1 (got A = {a}, B = {b}, sigma = {sigma}, p = {p})"
            )));
        }
        let beta = sigma * b;
        let gamma = sigma * a * omega_measure.powf(-(p - 1.0) / sigma);
        Ok(Self { sigma, p, a, b, beta, gamma })
    }

    /// `(β/γ)^{1/(σ+p-1)}`.
    pub fn stationary_level(&self) -> f64 {
        (self.beta / self.gamma).powf(1.0 / (self.sigma + self.p - 1.0))
    }

    /// `(β/γ)^{1/(σ+p-1)} + (σ/(γ(p-1)))^{1/(p-1)} t^{-1/(p-1)}`.
    pub fn smoothing_bound(&self, t: f64) -> f64 {
        let e = 1.0 / (self.p - 1.0);
        self.stationary_level() + (self.sigma / (self.gamma * (self.p - 1.0))).powf(e) * t.powf(-e)
    }
}

fn status_error(status: Status) -> Option<Error> {
    match status {
        Status::Completed => None,
        Status::BlownUp { t } => Some(Error::UnexpectedBlowup { t }),
        Status::NewtonFailed { t } => Some(Error::NewtonFailed { t }),
    }
}

/// `v^K`: the problem with `g` replaced by its clamp at `k`.
pub fn solve_truncated(problem: &Problem, u0: &Field, k: f64, t_end: f64, cfg: &StepConfig) -> Result<Trajectory> {
    problem.require_dissipative()?;
    let gk = problem.truncated_flux(k)?;
    integrator::integrate(u0, t_end, &problem.f, &gk, cfg)
}

/// The Robin supersolution data for `v^K`: `L = max(0, -d_f)`, `A = |f(0)|`,
/// `D = |g(0)|`, initial value `|u0|`.
pub fn robin_supersolution(problem: &Problem, u0: &Field, k: f64) -> RobinLinearProblem {
    RobinLinearProblem {
        interior_rate: problem.f.one_sided_lipschitz(),
        interior_source: problem.f.at_zero().abs(),
        boundary_rate: k,
        boundary_source: problem.g.at_zero().abs(),
        u0: u0.abs(),
    }
}

/// Largest `|v^K(t, x)| - U(t, x)` over saved times and all nodes.
pub fn domination_check(problem: &Problem, u0: &Field, k: f64, t_end: f64, cfg: &StepConfig) -> Result<f64> {
    let cfg = StepConfig { adaptive: false, ..cfg.clone() };
    let v = solve_truncated(problem, u0, k, t_end, &cfg)?;
    if let Some(e) = status_error(v.status) {
        return Err(e);
    }
    let sup = integrator::solve_robin(&robin_supersolution(problem, u0, k), t_end, &cfg)?;
    let mut worst = f64::NEG_INFINITY;
    for (t, vs) in v.times.iter().zip(&v.snapshots) {
        let us = sup
            .at_time(*t, 1e-9)
            .ok_or_else(|| Error::InvalidParameter(format!("supersolution has no snapshot at t = {t}")))?;
        worst = worst.max(vs.abs().max_excess_over(us));
    }
    Ok(worst)
}

/// Default clamp schedule `K0 2^i`, `i = 0..5`, with `K0 = 2 g'(1 + ‖u0‖_∞)`.
pub fn default_k_schedule(problem: &Problem, u0: &Field) -> Vec<f64> {
    let k0 = (2.0 * problem.g.derivative(1.0 + u0.sup_norm())).max(problem.g.d + 1.0);
    (0..6).map(|i| k0 * 2f64.powi(i)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub epsilon: f64,
    pub t_end: f64,
    /// Required shrink factor between successive gaps (`1` = nonincreasing).
    pub gap_factor: f64,
}

impl LimitOptions {
    pub fn new(epsilon: f64, t_end: f64) -> Self {
        Self { epsilon, t_end, gap_factor: 1.0 }
    }
}

/// Absolute slack, relative to the largest gap, below which gaps count as equal.
pub const GAP_FLOOR: f64 = 1e-12;
/// Nodewise slack for order comparisons between trajectories.
pub const ORDER_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct CascadeResult {
    pub k_schedule: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// `cauchy_gaps[i][j] = sup_{t in [ε, T]} ‖v^{K_{i+1}}(t) - v^{K_i}(t)‖_{σ_j}`.
    pub cauchy_gaps: Vec<Vec<f64>>,
    /// `v^{K_i} <= v^{K_{i+1}} + slack` at every saved time.
    pub nondecreasing_in_k: bool,
    /// `v^{K_i} >= v^{K_{i+1}} - slack` at every saved time.
    pub nonincreasing_in_k: bool,
    /// The expected order for one-signed data: nondecreasing for `u0 >= 0`,
    /// nonincreasing for `u0 <= 0`; `None` for sign-changing data.
    pub monotone: Option<bool>,
    pub epsilon: f64,
    pub t_end: f64,
}

impl CascadeResult {
    /// The finest-clamp trajectory, standing in for the limit solution.
    pub fn limit(&self) -> &Trajectory {
        self.trajectories.last().expect("schedule has at least 3 clamps")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "K_low,K_high,sigma,gap")?;
        for (i, row) in self.cauchy_gaps.iter().enumerate() {
            for (s, gap) in self.sigmas.iter().zip(row) {
                writeln!(out, "{},{},{s},{gap}", self.k_schedule[i], self.k_schedule[i + 1])?;
            }
        }
        Ok(())
    }

    /// For each clamp, whether `max_{t >= ε} ‖v^K(t)‖_∞` stays inside the
    /// cut interval, i.e. `g_K(v^K) = g(v^K)` after the transient.
    pub fn truncation_inactive_after(&self, problem: &Problem, epsilon: f64) -> Result<Vec<bool>> {
        self.k_schedule
            .iter()
            .zip(&self.trajectories)
            .map(|(&k, tr)| {
                let (a, b) = problem.truncated_flux(k)?.cut_interval();
                let hi = tr.sup_over(epsilon, tr.final_time());
                Ok(hi < b.min(-a))
            })
            .collect()
    }
}

/// Runs `v^K` for every clamp in the schedule (in parallel) and compares
/// consecutive members on the saved times in `[ε, T]`.
pub fn k_limit(problem: &Problem, u0: &Field, k_schedule: &[f64], opts: LimitOptions, cfg: &StepConfig) -> Result<CascadeResult> {
    if k_schedule.len() < 3 {
        return Err(Error::InvalidParameter("clamp schedule needs at least 3 entries".into()));
    }
    if k_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("clamp schedule must be strictly increasing".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon < opts.t_end) {
        return Err(Error::InvalidParameter(format!("need 0 < epsilon = {} < T = {}", opts.epsilon, opts.t_end)));
    }
    let trajectories: Vec<Trajectory> = k_schedule
        .par_iter()
        .map(|&k| solve_truncated(problem, u0, k, opts.t_end, cfg))
        .collect::<Result<_>>()?;
    if let Some(e) = trajectories.iter().find_map(|tr| status_error(tr.status)) {
        return Err(e);
    }

    let sigmas = cfg.sigmas.clone();
    let mut cauchy_gaps = Vec::with_capacity(k_schedule.len() - 1);
    let mut nondecreasing = true;
    let mut nonincreasing = true;
    for pair in trajectories.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        let mut gaps = vec![0.0; sigmas.len()];
        for (j, &t) in lo.times.iter().enumerate() {
            let other = hi
                .at_time(t, 1e-9 * t.max(1.0))
                .ok_or_else(|| Error::InvalidParameter(format!("time grids differ at t = {t}")))?;
            let a = &lo.snapshots[j];
            nondecreasing &= a.max_excess_over(other) <= ORDER_SLACK;
            nonincreasing &= other.max_excess_over(a) <= ORDER_SLACK;
            if t >= opts.epsilon - 1e-12 {
                let diff = other.sub(a);
                for (g, &s) in gaps.iter_mut().zip(&sigmas) {
                    *g = f64::max(*g, grid::lebesgue_norm(&diff, s));
                }
            }
        }
        cauchy_gaps.push(gaps);
    }

    let monotone = if u0.min() >= 0.0 {
        Some(nondecreasing)
    } else if u0.max() <= 0.0 {
        Some(nonincreasing)
    } else {
        None
    };
    for j in 0..sigmas.len() {
        let scale = cauchy_gaps.iter().map(|g| g[j]).fold(1.0, f64::max);
        let ok = cauchy_gaps.windows(2).all(|w| w[1][j] <= w[0][j] / opts.gap_factor + GAP_FLOOR * scale);
        if !ok {
            return Err(Error::ScheduleNotCauchy { gaps: cauchy_gaps });
        }
    }
    Ok(CascadeResult {
        k_schedule: k_schedule.to_vec(),
        sigmas,
        trajectories,
        cauchy_gaps,
        nondecreasing_in_k: nondecreasing,
        nonincreasing_in_k: nonincreasing,
        monotone,
        epsilon: opts.epsilon,
        t_end: opts.t_end,
    })
}

fn sigma_index(traj: &Trajectory, sigma: f64) -> Result<usize> {
    traj.sigma_index(sigma)
        .ok_or_else(|| Error::InvalidParameter(format!("sigma = {sigma} was not recorded on this trajectory")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub sigma: f64,
    /// `(t, ‖u(t)‖_σ - bound(t))` for saved `t > 0`.
    pub residuals: Vec<(f64, f64)>,
    /// `max_t ‖u(t)‖_σ - max(‖u0‖_σ, (β/γ)^{1/(σ+p-1)})`.
    pub level_excess: f64,
}

impl SmoothingReport {
    pub fn worst(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst_in(&self, from: f64, to: f64) -> f64 {
        self.residuals
            .iter()
            .filter(|(t, _)| *t >= from - 1e-12 && *t <= to + 1e-12)
            .map(|r| r.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn smoothing_bound_check(traj: &Trajectory, consts: &EnergyConstants) -> Result<SmoothingReport> {
    let k = sigma_index(traj, consts.sigma)?;
    let norms = &traj.norm_series[k];
    let residuals = traj
        .times
        .iter()
        .zip(norms)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &n)| (t, n - consts.smoothing_bound(t)))
        .collect();
    let cap = norms[0].max(consts.stationary_level());
    let level_excess = norms.iter().map(|n| n - cap).fold(f64::NEG_INFINITY, f64::max);
    Ok(SmoothingReport { sigma: consts.sigma, residuals, level_excess })
}

/// Minimum number of saved times inside a decay-fit window.
pub const MIN_FIT_SAMPLES: usize = 8;

/// Least-squares slope of `log ‖u(t)‖_σ` against `log t` over saved times in `window`.
pub fn decay_exponent_fit(traj: &Trajectory, sigma: f64, window: (f64, f64)) -> Result<f64> {
    let k = sigma_index(traj, sigma)?;
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.norm_series[k])
        .filter(|(&t, &n)| t > 0.0 && n > 0.0 && t >= window.0 - 1e-12 && t <= window.1 + 1e-12)
        .map(|(&t, &n)| (t.ln(), n.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_FIT_SAMPLES, found: pts.len() });
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok(sxy / sxx)
}

/// Per-step energy residual `(t, rate + (2(σ-1)/σ²) G + A absorption - B)`.
pub fn energy_residual_series(traj: &Trajectory, consts: &EnergyConstants) -> Result<Vec<(f64, f64)>> {
    let k = sigma_index(traj, consts.sigma)?;
    Ok(traj
        .energy
        .iter()
        .map(|st| (st.t, st.terms[k].residual(consts.sigma, st.dt, consts.a, consts.b)))
        .collect())
}

/// Worst energy residual over every step after the first (`-B` if there is none).
pub fn energy_residual_monitor(traj: &Trajectory, consts: &EnergyConstants) -> Result<f64> {
    let series = energy_residual_series(traj, consts)?;
    Ok(series.iter().skip(1).map(|r| r.1).fold(-consts.b, f64::max))
}

/// `∫_ε^T ∫_Γ |u|^σ` (right-endpoint rule on the integration steps) against
/// `C T + ‖u(ε)‖_σ^σ`; `ε` must be a saved time.
pub fn trace_bound_check(traj: &Trajectory, sigma: f64, epsilon: f64, c: f64) -> Result<InequalityReport> {
    let (lhs, start) = trace_bound_sides(traj, sigma, epsilon)?;
    Ok(InequalityReport::new(lhs, c * traj.final_time() + start, c))
}

/// `(∫_ε^T ∫_Γ |u|^σ, ‖u(ε)‖_σ^σ)`.
pub fn trace_bound_sides(traj: &Trajectory, sigma: f64, epsilon: f64) -> Result<(f64, f64)> {
    let k = sigma_index(traj, sigma)?;
    if !(epsilon < traj.final_time()) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must precede T = {}", traj.final_time())));
    }
    let at = traj
        .at_time(epsilon, 1e-9 * epsilon.max(1.0))
        .ok_or_else(|| Error::InvalidParameter(format!("epsilon = {epsilon} is not a saved time")))?;
    let start = grid::lebesgue_norm_pow(at, sigma);
    let lhs = traj
        .energy
        .iter()
        .filter(|st| st.t - st.dt >= epsilon - 1e-12)
        .map(|st| st.dt * st.terms[k].trace)
        .sum();
    Ok((lhs, start))
}

/// `d(t) = ‖u(t) - w(t)‖_r^r` at the saved times shared by both trajectories.
pub fn difference_series(u: &Trajectory, w: &Trajectory, r: f64) -> Result<Vec<(f64, f64)>> {
    u.times
        .iter()
        .zip(&u.snapshots)
        .map(|(&t, a)| {
            let b = w
                .at_time(t, 1e-9 * t.max(1.0))
                .ok_or_else(|| Error::InvalidParameter(format!("time grids differ at t = {t}")))?;
            Ok((t, grid::lebesgue_norm_pow(&a.sub(b), r)))
        })
        .collect()
}

/// Smallest `C` with `d(t) <= e^{Ct} d(0)` at every saved `t > 0`.
pub fn gronwall_exponent(u: &Trajectory, w: &Trajectory, r: f64) -> Result<f64> {
    let series = difference_series(u, w, r)?;
    let d0 = series[0].1;
    if d0 <= 0.0 {
        return Err(Error::InvalidParameter("initial data coincide".into()));
    }
    Ok(series
        .iter()
        .filter(|(t, _)| *t > 0.0)
        .map(|(t, d)| (d / d0).ln() / t)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `max_t d(t) / (e^{Ct} d(0))`; at most `1` when the estimate holds.
pub fn gronwall_check(u: &Trajectory, w: &Trajectory, r: f64, c: f64) -> Result<f64> {
    let series = difference_series(u, w, r)?;
    let d0 = series[0].1;
    Ok(series.iter().map(|(t, d)| d / ((c * t).exp() * d0)).fold(0.0, f64::max))
}

/// `‖v(t_j) - u0‖_{L^α(Ω₁)}` for each `t_j` in `times`, with `Ω₁` the central
/// `interior_fraction` of the domain and `v` the limit trajectory.
pub fn initial_continuity_check(
    result: &CascadeResult,
    u0: &Field,
    alpha: f64,
    interior_fraction: f64,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    continuity_series(result.limit(), u0, alpha, interior_fraction, times)
}

pub fn continuity_series(traj: &Trajectory, u0: &Field, alpha: f64, interior_fraction: f64, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(alpha >= 1.0) || !(interior_fraction > 0.0 && interior_fraction < 1.0) {
        return Err(Error::InvalidParameter("need alpha >= 1 and 0 < interior_fraction < 1".into()));
    }
    times
        .iter()
        .map(|&t| {
            let v = traj
                .at_time(t, 1e-9 * t.max(1.0))
                .ok_or_else(|| Error::InvalidParameter(format!("t = {t} is not a saved time")))?;
            Ok((t, grid::lebesgue_norm_central(&v.sub(u0), alpha, interior_fraction)))
        })
        .collect()
}
