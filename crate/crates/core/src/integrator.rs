//! Backward-Euler time stepping for `u_t - u_xx + f(u) = 0` on `(0, ℓ)` with
//! flux condition `∂u/∂n = g(u)` at both ends.
//!
//! The flux enters through ghost nodes `u_{-1} = u_1 + 2h g(u_0)` and
//! `u_n = u_{n-2} + 2h g(u_{n-1})`, so the boundary rows of the discrete
//! Laplacian read `2(u_1 - u_0)/h² + 2g(u_0)/h`. With trapezoid weights the
//! scheme conserves `∫u` exactly when `f = g = 0`, and each implicit step is
//! a tridiagonal system solved by damped Newton.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, Mesh1D};
use crate::linalg::Tridiagonal;
use crate::nonlinearity::{Nonlinearity, PowerNonlinearity};

/// Number of times a failed step is split in half before giving up.
pub const MAX_DT_HALVINGS: u32 = 4;
/// Maximum number of halvings of a Newton update while searching for descent.
pub const MAX_DAMPING_HALVINGS: u32 = 20;
/// Newton also stops once the update is this small relative to `‖u‖∞`.
pub const NEWTON_UPDATE_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Base (maximum) time step.
    pub dt: f64,
    /// Implicitness of the diffusion term. Only `1` (backward Euler) is supported.
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Sup-norm level that flags blow-up.
    pub blowup_threshold: f64,
    /// Shrink steps while the sup norm grows so that its relative increase
    /// per step stays near `dt` (in units of one time unit).
    #[serde(default)]
    pub adaptive: bool,
    /// Spacing of saved snapshots; `0` saves every step.
    pub save_interval: f64,
    /// Exponents for which `L^σ` norms and energy terms are recorded.
    pub sigmas: Vec<f64>,
    #[serde(default = "default_true")]
    pub record_energy: bool,
}

fn default_theta() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            theta: 1.0,
            newton_tol: 1e-11,
            newton_max: 50,
            blowup_threshold: 1e8,
            adaptive: false,
            save_interval: 1e-2,
            sigmas: vec![2.0],
            record_energy: true,
        }
    }
}

impl StepConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_save_interval(mut self, s: f64) -> Self {
        self.save_interval = s;
        self
    }

    pub fn with_sigmas(mut self, sigmas: Vec<f64>) -> Self {
        self.sigmas = sigmas;
        self
    }

    pub fn adaptive(mut self, on: bool) -> Self {
        self.adaptive = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if self.theta != 1.0 {
            return Err(Error::InvalidParameter(format!("theta = {} unsupported (only 1)", self.theta)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(Error::InvalidParameter("Newton tolerance and iteration cap must be positive".into()));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::InvalidParameter("blow-up threshold must be positive".into()));
        }
        if self.save_interval < 0.0 {
            return Err(Error::InvalidParameter("save interval must be nonnegative".into()));
        }
        if self.sigmas.iter().any(|&s| s < 1.0) {
            return Err(Error::InvalidParameter("every sigma must be >= 1".into()));
        }
        Ok(())
    }
}

/// Discrete right-hand side `F(v) = Δ_h v - f(v)` (with the flux built into
/// the boundary rows) together with its tridiagonal Jacobian.
pub fn assemble_operator(v: &[f64], h: f64, f: &dyn Nonlinearity, g: &dyn Nonlinearity) -> (Vec<f64>, Tridiagonal) {
    let n = v.len();
    let h2 = 1.0 / (h * h);
    let mut rhs = vec![0.0; n];
    let mut jac = Tridiagonal::zeros(n);
    for i in 0..n {
        let (fv, dfv) = f.eval(v[i]);
        rhs[i] = -fv;
        jac.diag[i] = -dfv;
    }
    for i in 1..n - 1 {
        rhs[i] += h2 * (v[i - 1] - 2.0 * v[i] + v[i + 1]);
        jac.lower[i] = h2;
        jac.diag[i] -= 2.0 * h2;
        jac.upper[i] = h2;
    }
    let (g0, dg0) = g.eval(v[0]);
    rhs[0] += 2.0 * h2 * (v[1] - v[0]) + 2.0 * g0 / h;
    jac.diag[0] += -2.0 * h2 + 2.0 * dg0 / h;
    jac.upper[0] = 2.0 * h2;
    let (gn, dgn) = g.eval(v[n - 1]);
    rhs[n - 1] += 2.0 * h2 * (v[n - 2] - v[n - 1]) + 2.0 * gn / h;
    jac.diag[n - 1] += -2.0 * h2 + 2.0 * dgn / h;
    jac.lower[n - 1] = 2.0 * h2;
    (rhs, jac)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Backward-Euler residual `v - u - dt F(v)` and its Jacobian `I - dt F'(v)`.
fn be_residual(v: &[f64], u: &[f64], dt: f64, h: f64, f: &dyn Nonlinearity, g: &dyn Nonlinearity) -> (Vec<f64>, Tridiagonal) {
    let (rhs, mut jac) = assemble_operator(v, h, f, g);
    let res = v.iter().zip(u).zip(&rhs).map(|((vi, ui), ri)| vi - ui - dt * ri).collect();
    for i in 0..v.len() {
        jac.lower[i] *= -dt;
        jac.upper[i] *= -dt;
        jac.diag[i] = 1.0 - dt * jac.diag[i];
    }
    (res, jac)
}

/// Residuals below this many ulps of the largest term of `dt F(v)` count as converged.
const ROUNDOFF_ULPS: f64 = 64.0;

/// Magnitude of the largest individual term in `F(v)`.
fn term_scale(v: &[f64], h: f64, f: &dyn Nonlinearity, g: &dyn Nonlinearity) -> f64 {
    let n = v.len();
    let reaction = v.iter().fold(0.0, |m: f64, &x| m.max(f.eval(x).0.abs()));
    let flux = 2.0 * g.eval(v[0]).0.abs().max(g.eval(v[n - 1]).0.abs()) / h;
    reaction.max(flux).max(4.0 * inf_norm(v) / (h * h))
}

/// Damped Newton for one implicit step of size `dt`; `None` on failure.
fn newton_step(u: &[f64], dt: f64, h: f64, f: &dyn Nonlinearity, g: &dyn Nonlinearity, cfg: &StepConfig) -> Option<Vec<f64>> {
    let mut v = u.to_vec();
    let scale_u = inf_norm(u);
    for _ in 0..cfg.newton_max {
        let (res, jac) = be_residual(&v, u, dt, h, f, g);
        let rn = inf_norm(&res);
        let scale = 1f64.max(scale_u).max(inf_norm(&v));
        if !rn.is_finite() {
            return None;
        }
        if rn <= (cfg.newton_tol * scale).max(ROUNDOFF_ULPS * f64::EPSILON * dt * term_scale(&v, h, f, g)) {
            return Some(v);
        }
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = jac.solve(&neg).ok()?;
        if inf_norm(&delta) <= NEWTON_UPDATE_TOL * scale {
            // residual is dominated by roundoff in the large terms of F
            return Some(v.iter().zip(&delta).map(|(a, d)| a + d).collect());
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_DAMPING_HALVINGS {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let (rt, _) = be_residual(&trial, u, dt, h, f, g);
            let rtn = inf_norm(&rt);
            if rtn.is_finite() && rtn < rn {
                v = trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // residual stagnated at roundoff level
            return (inf_norm(&delta) <= NEWTON_UPDATE_TOL * scale).then_some(v);
        }
    }
    let (res, _) = be_residual(&v, u, dt, h, f, g);
    (inf_norm(&res) <= cfg.newton_tol * 1f64.max(scale_u).max(inf_norm(&v))).then_some(v)
}

fn step_values(u: &[f64], dt: f64, h: f64, f: &dyn Nonlinearity, g: &dyn Nonlinearity, cfg: &StepConfig, depth: u32) -> Option<Vec<f64>> {
    if let Some(v) = newton_step(u, dt, h, f, g, cfg) {
        return Some(v);
    }
    if depth >= MAX_DT_HALVINGS {
        return None;
    }
    let half = step_values(u, 0.5 * dt, h, f, g, cfg, depth + 1)?;
    step_values(&half, 0.5 * dt, h, f, g, cfg, depth + 1)
}

/// One backward-Euler step of size `dt` from `u`.
///
/// If Newton does not converge the step is covered by two half steps,
/// recursively, up to [`MAX_DT_HALVINGS`] times.
pub fn step(u: &Field, f: &dyn Nonlinearity, g: &dyn Nonlinearity, dt: f64, cfg: &StepConfig) -> Result<Field> {
    let h = u.mesh().h();
    match step_values(u.values(), dt, h, f, g, cfg, 0) {
        Some(v) => Field::new(*u.mesh(), v),
        None => Err(Error::NewtonFailed { t: dt }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Status {
    Completed,
    BlownUp { t: f64 },
    NewtonFailed { t: f64 },
}

impl Status {
    pub fn is_completed(&self) -> bool {
        matches!(self, Status::Completed)
    }
}

/// Per-σ quantities of one accepted step from `u^n` to `u^{n+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTerms {
    /// `‖u^n‖_σ^σ`
    pub norm_pow_prev: f64,
    /// `‖u^{n+1}‖_σ^σ`
    pub norm_pow: f64,
    /// `∫|∇|u^{n+1}|^{σ/2}|²`
    pub gradient: f64,
    /// `‖u^{n+1}‖_{σ+p-1}^{σ+p-1}` (zero when `f` has no power growth)
    pub absorption: f64,
    /// `∫_Γ |u^{n+1}|^σ`
    pub trace: f64,
}

impl EnergyTerms {
    /// `(1/σ)(‖u^{n+1}‖^σ - ‖u^n‖^σ)/dt + (2(σ-1)/σ²) G + A ‖u^{n+1}‖^{σ+p-1} - B`.
    pub fn residual(&self, sigma: f64, dt: f64, a: f64, b: f64) -> f64 {
        self.rate(sigma, dt) + 2.0 * (sigma - 1.0) / (sigma * sigma) * self.gradient + a * self.absorption - b
    }

    pub fn rate(&self, sigma: f64, dt: f64) -> f64 {
        (self.norm_pow - self.norm_pow_prev) / (sigma * dt)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyStep {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    /// Indexed like [`Trajectory::sigmas`].
    pub terms: Vec<EnergyTerms>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mesh: Mesh1D,
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    pub sigmas: Vec<f64>,
    /// `norm_series[k][j] = ‖u(times[j])‖_{sigmas[k]}`.
    pub norm_series: Vec<Vec<f64>>,
    pub sup_series: Vec<f64>,
    pub energy: Vec<EnergyStep>,
    pub absorption_exponent: Option<f64>,
    pub status: Status,
    pub steps: usize,
}

impl Trajectory {
    fn start(u0: &Field, sigmas: &[f64], absorption_exponent: Option<f64>) -> Self {
        let mut tr = Self {
            mesh: *u0.mesh(),
            times: Vec::new(),
            snapshots: Vec::new(),
            sigmas: sigmas.to_vec(),
            norm_series: vec![Vec::new(); sigmas.len()],
            sup_series: Vec::new(),
            energy: Vec::new(),
            absorption_exponent,
            status: Status::Completed,
            steps: 0,
        };
        tr.save(0.0, u0.clone());
        tr
    }

    fn save(&mut self, t: f64, u: Field) {
        for (k, &s) in self.sigmas.iter().enumerate() {
            self.norm_series[k].push(grid::lebesgue_norm(&u, s));
        }
        self.sup_series.push(u.sup_norm());
        self.times.push(t);
        self.snapshots.push(u);
    }

    pub fn initial(&self) -> &Field {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn sigma_index(&self, sigma: f64) -> Option<usize> {
        self.sigmas.iter().position(|&s| (s - sigma).abs() <= 1e-12 * sigma.max(1.0))
    }

    /// Index of the saved time closest to `t`, if within `tol`.
    pub fn time_index(&self, t: f64, tol: f64) -> Option<usize> {
        let (i, d) = self
            .times
            .iter()
            .enumerate()
            .map(|(i, &s)| (i, (s - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d <= tol).then_some(i)
    }

    pub fn at_time(&self, t: f64, tol: f64) -> Option<&Field> {
        self.time_index(t, tol).map(|i| &self.snapshots[i])
    }

    /// First saved time at which the sup norm exceeds `threshold`.
    pub fn first_exceedance(&self, threshold: f64) -> Option<f64> {
        self.times.iter().zip(&self.sup_series).find(|(_, &s)| s > threshold).map(|(&t, _)| t)
    }

    /// `sup_{t in [from, to]} ‖u(t)‖_∞` over saved times.
    pub fn sup_over(&self, from: f64, to: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.sup_series)
            .filter(|(&t, _)| t >= from - 1e-12 && t <= to + 1e-12)
            .fold(0.0, |m, (_, &s)| m.max(s))
    }

    pub fn write_norms_csv<W: Write>(&self, mut out: W, header: bool) -> io::Result<()> {
        if header {
            writeln!(out, "t,sigma,norm")?;
        }
        for (j, t) in self.times.iter().enumerate() {
            for (k, s) in self.sigmas.iter().enumerate() {
                writeln!(out, "{t},{s},{}", self.norm_series[k][j])?;
            }
        }
        Ok(())
    }

    /// Rows `t, sigma, residual, bound_B` for each recorded step and each
    /// `(sigma, A, B)` triple whose sigma was recorded.
    pub fn write_energy_csv<W: Write>(&self, mut out: W, constants: &[(f64, f64, f64)], header: bool) -> io::Result<()> {
        if header {
            writeln!(out, "t,sigma,residual,bound_B")?;
        }
        for st in &self.energy {
            for &(sigma, a, b) in constants {
                if let Some(k) = self.sigma_index(sigma) {
                    writeln!(out, "{},{sigma},{},{b}", st.t, st.terms[k].residual(sigma, st.dt, a, b))?;
                }
            }
        }
        Ok(())
    }

    pub fn write_snapshots_csv<W: Write>(&self, out: W) -> io::Result<()> {
        grid::write_snapshots_csv(out, &self.times, &self.snapshots)
    }
}

struct EnergyRecorder {
    sigmas: Vec<f64>,
    exponent: Option<f64>,
    prev: Vec<f64>,
}

impl EnergyRecorder {
    fn new(u0: &Field, sigmas: &[f64], exponent: Option<f64>) -> Self {
        let prev = sigmas.iter().map(|&s| grid::lebesgue_norm_pow(u0, s)).collect();
        Self { sigmas: sigmas.to_vec(), exponent, prev }
    }

    fn record(&mut self, v: &Field, t: f64, dt: f64) -> EnergyStep {
        let terms = self
            .sigmas
            .iter()
            .zip(self.prev.iter_mut())
            .map(|(&s, prev)| {
                let norm_pow = grid::lebesgue_norm_pow(v, s);
                let terms = EnergyTerms {
                    norm_pow_prev: *prev,
                    norm_pow,
                    gradient: grid::grad_power_norm(v, s),
                    absorption: self.exponent.map_or(0.0, |p| grid::lebesgue_norm_pow(v, s + p - 1.0)),
                    trace: grid::trace_norm(v, s),
                };
                *prev = norm_pow;
                terms
            })
            .collect();
        EnergyStep { t, dt, terms }
    }
}

/// Rate at which the sup norm grows at `u`, relative to its size, estimated
/// from `F(u)` at the nodes attaining the maximum.
fn explicit_growth_rate(u: &Field, f: &dyn Nonlinearity, g: &dyn Nonlinearity) -> f64 {
    let sup = u.sup_norm();
    if sup == 0.0 {
        return 0.0;
    }
    let (rhs, _) = assemble_operator(u.values(), u.mesh().h(), f, g);
    u.values()
        .iter()
        .zip(&rhs)
        .filter(|(v, _)| v.abs() >= sup * (1.0 - 1e-12))
        .map(|(v, r)| (v.signum() * r).max(0.0))
        .fold(0.0, f64::max)
        / sup
}

/// Integrates from `u0` up to `t_end`.
///
/// Snapshots are saved at multiples of `cfg.save_interval` and at `t_end`.
/// Blow-up (sup norm above the threshold) and Newton failure end the run
/// early and are reported in [`Trajectory::status`]; the state reached is
/// saved as the last snapshot.
pub fn integrate(u0: &Field, t_end: f64, f: &dyn Nonlinearity, g: &dyn Nonlinearity, cfg: &StepConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("final time {t_end} must be positive")));
    }
    let exponent = f.growth_exponent();
    let mut traj = Trajectory::start(u0, &cfg.sigmas, exponent);
    let mut recorder = cfg.record_energy.then(|| EnergyRecorder::new(u0, &cfg.sigmas, exponent));
    let h = u0.mesh().h();
    let save = if cfg.save_interval > 0.0 { cfg.save_interval } else { cfg.dt };
    let n_saves = ((t_end / save) - 1e-9).ceil().max(1.0) as usize;

    let mut u = u0.clone();
    let mut t = 0.0;
    let mut rate = if cfg.adaptive { explicit_growth_rate(u0, f, g) } else { 0.0 };

    for s in 1..=n_saves {
        let t_target = if s == n_saves { t_end } else { s as f64 * save };
        if cfg.adaptive {
            while t < t_target {
                let remaining = t_target - t;
                let mut dt = (cfg.dt / rate.max(1.0)).min(remaining);
                if remaining - dt < 1e-12 * t_target.max(1.0) {
                    dt = remaining;
                }
                let (v, dt) = loop {
                    let Some(v) = step_values(u.values(), dt, h, f, g, cfg, 0) else {
                        traj.status = Status::NewtonFailed { t };
                        traj.save(t, u);
                        return Ok(traj);
                    };
                    let v = Field::new(*u.mesh(), v)?;
                    let (su, sv) = (u.sup_norm(), v.sup_norm());
                    let increment = if sv > 0.0 { (sv - su) / sv } else { 0.0 };
                    if increment > 2.0 * cfg.dt.max(dt * rate) && dt > 1e-14 * t_target.max(1.0) {
                        dt *= 0.25;
                        continue;
                    }
                    rate = if sv > 0.0 { ((sv - su) / (dt * sv)).max(0.0).max(explicit_growth_rate(&v, f, g)) } else { 0.0 };
                    break (v, dt);
                };
                t = if (t_target - (t + dt)).abs() < 1e-12 * t_target.max(1.0) { t_target } else { t + dt };
                traj.steps += 1;
                if let Some(rec) = recorder.as_mut() {
                    traj.energy.push(rec.record(&v, t, dt));
                }
                u = v;
                if u.sup_norm() > cfg.blowup_threshold || !u.is_finite() {
                    traj.status = Status::BlownUp { t };
                    traj.save(t, u);
                    return Ok(traj);
                }
            }
        } else {
            let t_start = t;
            let span = t_target - t_start;
            let m = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
            let dt = span / m as f64;
            for k in 1..=m {
                let Some(v) = step_values(u.values(), dt, h, f, g, cfg, 0) else {
                    traj.status = Status::NewtonFailed { t };
                    traj.save(t, u);
                    return Ok(traj);
                };
                let v = Field::new(*u.mesh(), v)?;
                t = if k == m { t_target } else { t_start + k as f64 * dt };
                traj.steps += 1;
                if let Some(rec) = recorder.as_mut() {
                    traj.energy.push(rec.record(&v, t, dt));
                }
                u = v;
                if u.sup_norm() > cfg.blowup_threshold || !u.is_finite() {
                    traj.status = Status::BlownUp { t };
                    traj.save(t, u);
                    return Ok(traj);
                }
            }
        }
        traj.save(t_target, u.clone());
    }
    Ok(traj)
}

/// Linear problem `U_t - U_xx = L U + A`, `∂U/∂n = K U + D`.
#[derive(Clone, Debug, PartialEq)]
pub struct RobinLinearProblem {
    /// Interior linear rate `L`.
    pub interior_rate: f64,
    /// Interior source `A`.
    pub interior_source: f64,
    /// Boundary linear rate `K`.
    pub boundary_rate: f64,
    /// Boundary source `D`.
    pub boundary_source: f64,
    pub u0: Field,
}

impl RobinLinearProblem {
    /// The problem as a reaction/flux pair: `f(s) = -L s - A`, `g(s) = K s + D`.
    pub fn as_nonlinearities(&self) -> (PowerNonlinearity, PowerNonlinearity) {
        (
            PowerNonlinearity::affine(-self.interior_rate, -self.interior_source),
            PowerNonlinearity::affine(self.boundary_rate, self.boundary_source),
        )
    }

    /// The constant backward-Euler matrix `I - dt F'` for step `dt`.
    pub fn step_matrix(&self, dt: f64) -> Tridiagonal {
        let (f, g) = self.as_nonlinearities();
        let zeros = vec![0.0; self.u0.mesh().n()];
        let (_, mut jac) = assemble_operator(&zeros, self.u0.mesh().h(), &f, &g);
        for i in 0..zeros.len() {
            jac.lower[i] *= -dt;
            jac.upper[i] *= -dt;
            jac.diag[i] = 1.0 - dt * jac.diag[i];
        }
        jac
    }
}

/// Backward Euler for [`RobinLinearProblem`]: one tridiagonal solve per step.
///
/// Requires `dt L < 1` and an M-matrix step matrix, which makes the scheme
/// positivity preserving.
pub fn solve_robin(prob: &RobinLinearProblem, t_end: f64, cfg: &StepConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.dt * prob.interior_rate >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "dt = {} too large for interior rate L = {} (need dt L < 1)",
            cfg.dt, prob.interior_rate
        )));
    }
    let (f, g) = prob.as_nonlinearities();
    let mesh = *prob.u0.mesh();
    let mut traj = Trajectory::start(&prob.u0, &cfg.sigmas, None);
    let mut recorder = cfg.record_energy.then(|| EnergyRecorder::new(&prob.u0, &cfg.sigmas, None));
    let zeros = vec![0.0; mesh.n()];
    let (source, _) = assemble_operator(&zeros, mesh.h(), &f, &g);

    let save = if cfg.save_interval > 0.0 { cfg.save_interval } else { cfg.dt };
    let n_saves = ((t_end / save) - 1e-9).ceil().max(1.0) as usize;
    let mut u = prob.u0.clone();
    let mut t = 0.0;
    let mut cached: Option<(f64, Tridiagonal)> = None;
    for s in 1..=n_saves {
        let t_target = if s == n_saves { t_end } else { s as f64 * save };
        let t_start = t;
        let m = (((t_target - t_start) / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
        let dt = (t_target - t_start) / m as f64;
        if cached.as_ref().map_or(true, |(d, _)| (d - dt).abs() > 1e-15 * dt) {
            let mat = prob.step_matrix(dt);
            if !mat.is_m_matrix() {
                return Err(Error::NotMMatrix(format!("Robin step matrix with dt = {dt}, K = {}", prob.boundary_rate)));
            }
            cached = Some((dt, mat));
        }
        let mat = &cached.as_ref().expect("cached above").1;
        for k in 1..=m {
            let rhs: Vec<f64> = u.values().iter().zip(&source).map(|(v, s)| v + dt * s).collect();
            let v = Field::new(mesh, mat.solve(&rhs)?)?;
            t = if k == m { t_target } else { t_start + k as f64 * dt };
            traj.steps += 1;
            if let Some(rec) = recorder.as_mut() {
                traj.energy.push(rec.record(&v, t, dt));
            }
            u = v;
        }
        traj.save(t_target, u.clone());
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlowupVerdict {
    pub confirmed: bool,
    /// Sup-norm threshold crossing time per refinement level (`None` if the
    /// run stayed below the threshold).
    pub t_star_estimates: Vec<Option<f64>>,
}

/// Minimum ratio between successive `t*` gaps for a confirmed blow-up.
pub const CAUCHY_SHRINK: f64 = 1.5;

/// Runs `factory(dt)` for every step size in `dt_schedule` (decreasing) and
/// decides whether the threshold crossing time stabilizes under refinement.
pub fn detect_blowup<F>(factory: F, dt_schedule: &[f64], threshold: f64) -> Result<BlowupVerdict>
where
    F: Fn(f64) -> Result<Trajectory>,
{
    if dt_schedule.len() < 3 {
        return Err(Error::InvalidParameter("blow-up detection needs at least 3 step sizes".into()));
    }
    if dt_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("dt schedule must be strictly decreasing".into()));
    }
    let mut estimates = Vec::with_capacity(dt_schedule.len());
    for &dt in dt_schedule {
        let traj = factory(dt)?;
        let t_star = match traj.status {
            Status::BlownUp { t } => Some(t),
            _ => traj.first_exceedance(threshold),
        };
        estimates.push(t_star);
    }
    if estimates.iter().any(Option::is_none) {
        return Ok(BlowupVerdict { confirmed: false, t_star_estimates: estimates });
    }
    let ts: Vec<f64> = estimates.iter().map(|t| t.expect("checked above")).collect();
    let gaps: Vec<f64> = ts.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] * CAUCHY_SHRINK <= w[0] || w[0] < 1e-12 * ts[0].abs().max(1e-300));
    if !shrinking {
        return Err(Error::Inconclusive { estimates: ts });
    }
    Ok(BlowupVerdict { confirmed: true, t_star_estimates: estimates })
}
