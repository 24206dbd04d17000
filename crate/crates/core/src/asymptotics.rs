//! Equilibria `-φ'' + f(φ) = 0`, `∂φ/∂n = g(φ)` and long-time behaviour.
//!
//! The extremal equilibria are reached by integrating from an upper barrier
//! (a supersolution) and a lower barrier (a subsolution); the trajectories
//! are then monotone in time and the settled states are polished by Newton.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::cascade;
use crate::error::{Error, Result};
use crate::grid::{Field, Mesh1D};
use crate::integrator::{self, Status, StepConfig};
use crate::nonlinearity::{Nonlinearity, Problem};

/// Residual level accepted for an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;
/// Nodewise slack for order comparisons.
pub const ORDER_SLACK: f64 = 1e-9;
pub const NEWTON_MAX: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StabilityTag {
    FromAbove,
    FromBelow,
    NewtonFound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub field: Field,
    /// Sup norm of the Jacobi-scaled discrete residual.
    pub residual: f64,
    pub stability_tag: StabilityTag,
}

/// `(F(φ)_i / |F'(φ)_ii|)` with `F(φ) = Δ_h φ - f(φ)` and the flux in the
/// boundary rows; its sup norm is the size of a Jacobi correction.
pub fn elliptic_residual(phi: &Field, f: &dyn Nonlinearity, g: &dyn Nonlinearity) -> f64 {
    let (rhs, jac) = integrator::assemble_operator(phi.values(), phi.mesh().h(), f, g);
    rhs.iter().zip(&jac.diag).map(|(r, d)| (r / d.abs().max(1.0)).abs()).fold(0.0, f64::max)
}

/// Damped Newton on the discrete elliptic system, starting from `guess`.
pub fn solve_equilibrium(guess: &Field, f: &dyn Nonlinearity, g: &dyn Nonlinearity) -> Result<Equilibrium> {
    let mesh = *guess.mesh();
    let h = mesh.h();
    let mut phi = guess.values().to_vec();
    let measure = |v: &[f64]| elliptic_residual(&Field::new(mesh, v.to_vec()).expect("mesh length"), f, g);
    let mut res = measure(&phi);
    for _ in 0..NEWTON_MAX {
        let scale = phi.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let (rhs, mut jac) = integrator::assemble_operator(&phi, h, f, g);
        // solve F'(φ) δ = -F(φ)
        for i in 0..phi.len() {
            jac.lower[i] = -jac.lower[i];
            jac.diag[i] = -jac.diag[i];
            jac.upper[i] = -jac.upper[i];
        }
        let delta = match jac.solve(&rhs) {
            Ok(d) => d,
            Err(_) => break,
        };
        if delta.iter().fold(0.0f64, |m, d| m.max(d.abs())) <= 1e-15 * scale {
            break;
        }
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..=integrator::MAX_DAMPING_HALVINGS {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let rt = measure(&trial);
            // deep inside tolerance roundoff hides descent; keep taking full steps
            if rt.is_finite() && (rt < res || (lambda == 1.0 && rt <= 1e-6 * EQUILIBRIUM_TOL)) {
                phi = trial;
                res = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(res <= EQUILIBRIUM_TOL) {
        return Err(Error::NoConvergence { residual: res });
    }
    Ok(Equilibrium { field: Field::new(mesh, phi)?, residual: res, stability_tag: StabilityTag::NewtonFound })
}

/// Whether `-F(ψ) >= 0` (upper) or `F(ψ) >= 0` (lower) at every node,
/// i.e. `ψ` is a discrete super- or subsolution including the flux rows.
pub fn is_barrier(psi: &Field, problem: &Problem, upper: bool) -> bool {
    let (rhs, _) = integrator::assemble_operator(psi.values(), psi.mesh().h(), &problem.f, &problem.g);
    let sign = if upper { -1.0 } else { 1.0 };
    rhs.iter().all(|r| sign * r >= 0.0)
}

/// Boundary-layer barrier `±(M + M(e^{-λx} + e^{-λ(ℓ-x)}))`, or the flat
/// level `±M` when that already is a barrier. `M` is doubled until the
/// discrete barrier inequality holds; returns the profile and the level used.
pub fn barrier_profile(problem: &Problem, mesh: Mesh1D, level: f64, upper: bool) -> Result<(Field, f64)> {
    let sign = if upper { 1.0 } else { -1.0 };
    let ell = mesh.length();
    let mut m = level.max(1e-3);
    for _ in 0..60 {
        let flat = Field::constant(mesh, sign * m);
        if is_barrier(&flat, problem, upper) {
            return Ok((flat, m));
        }
        // outward flux at the barrier's largest boundary value
        let flux = sign * problem.g.value(sign * 3.0 * m);
        let lambda = (2.0 * flux.max(0.0) / m).max(1.0);
        let psi = Field::from_fn(mesh, |x| sign * (m + m * ((-lambda * x).exp() + (-lambda * (ell - x)).exp())));
        if is_barrier(&psi, problem, upper) {
            return Ok((psi, m));
        }
        m *= 2.0;
    }
    Err(Error::InvalidParameter(format!("no barrier profile found above level {level}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalPair {
    pub phi_min: Equilibrium,
    pub phi_max: Equilibrium,
    /// Barrier level actually used.
    pub m: f64,
    /// Largest increase of the upper trajectory over one step (≤ 0 when monotone).
    pub upper_monotonicity_defect: f64,
    /// Largest decrease of the lower trajectory over one step (≤ 0 when monotone).
    pub lower_monotonicity_defect: f64,
    /// Times at which the two trajectories settled.
    pub settle_times: (f64, f64),
}

impl ExtremalPair {
    pub fn trajectories_monotone(&self) -> bool {
        self.upper_monotonicity_defect <= ORDER_SLACK && self.lower_monotonicity_defect <= ORDER_SLACK
    }

    pub fn write_csv<W: Write>(&self, mut out: W, found: &[Equilibrium]) -> io::Result<()> {
        write!(out, "x,phi_min,phi_max")?;
        for i in 0..found.len() {
            write!(out, ",newton_{i}")?;
        }
        writeln!(out)?;
        let mesh = self.phi_max.field.mesh();
        for i in 0..mesh.n() {
            write!(out, "{},{},{}", mesh.x(i), self.phi_min.field.values()[i], self.phi_max.field.values()[i])?;
            for e in found {
                write!(out, ",{}", e.field.values()[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

struct Settled {
    field: Field,
    defect: f64,
    t: f64,
}

/// Integrates until `‖u(t+Δ) - u(t)‖_∞ < tol Δ` with `Δ = 10 dt`, tracking
/// the largest step-to-step move against the expected direction.
fn settle(u0: Field, problem: &Problem, upper: bool, t_max: f64, tol: f64, cfg: &StepConfig) -> Result<Settled> {
    let dt = cfg.dt;
    let window = 10;
    let sign = if upper { 1.0 } else { -1.0 };
    let mut u = u0;
    let mut mark = u.clone();
    let mut defect = f64::NEG_INFINITY;
    let mut rate = f64::INFINITY;
    let mut k = 0usize;
    while (k as f64) * dt < t_max {
        let v = integrator::step(&u, &problem.f, &problem.g, dt, cfg).map_err(|_| Error::NewtonFailed { t: k as f64 * dt })?;
        let moved = v.values().iter().zip(u.values()).map(|(a, b)| sign * (a - b)).fold(f64::NEG_INFINITY, f64::max);
        defect = defect.max(moved);
        u = v;
        k += 1;
        if u.sup_norm() > cfg.blowup_threshold {
            return Err(Error::UnexpectedBlowup { t: k as f64 * dt });
        }
        if k % window == 0 {
            rate = u.sub(&mark).sup_norm() / (window as f64 * dt);
            if rate < tol {
                return Ok(Settled { field: u, defect, t: k as f64 * dt });
            }
            mark = u.clone();
        }
    }
    Err(Error::NotSettled { t_max, rate })
}

/// Extremal equilibria from barriers at level `m` (raised if needed).
pub fn extremal_equilibria(m: f64, t_max: f64, tol: f64, problem: &Problem, mesh: Mesh1D, cfg: &StepConfig) -> Result<ExtremalPair> {
    let (upper, m_up) = barrier_profile(problem, mesh, m, true)?;
    let (lower, m_lo) = barrier_profile(problem, mesh, m, false)?;
    let (hi, lo) = rayon::join(
        || settle(upper, problem, true, t_max, tol, cfg),
        || settle(lower, problem, false, t_max, tol, cfg),
    );
    let (hi, lo) = (hi?, lo?);
    let mut phi_max = solve_equilibrium(&hi.field, &problem.f, &problem.g)?;
    phi_max.stability_tag = StabilityTag::FromAbove;
    let mut phi_min = solve_equilibrium(&lo.field, &problem.f, &problem.g)?;
    phi_min.stability_tag = StabilityTag::FromBelow;
    Ok(ExtremalPair {
        phi_min,
        phi_max,
        m: m_up.max(m_lo),
        upper_monotonicity_defect: hi.defect,
        lower_monotonicity_defect: lo.defect,
        settle_times: (hi.t, lo.t),
    })
}

/// `phi_min - slack <= φ <= phi_max + slack` for every `φ` in `found`.
pub fn equilibria_order_check(found: &[Equilibrium], pair: &ExtremalPair) -> bool {
    found.iter().all(|e| {
        pair.phi_min.field.max_excess_over(&e.field) <= ORDER_SLACK && e.field.max_excess_over(&pair.phi_max.field) <= ORDER_SLACK
    })
}

/// Largest distance by which saved states at `t >= t_settle` leave `[phi_min, phi_max]`.
pub fn sandwich_violation(traj: &integrator::Trajectory, pair: &ExtremalPair, t_settle: f64) -> f64 {
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .filter(|(&t, _)| t >= t_settle)
        .map(|(_, u)| u.max_excess_over(&pair.phi_max.field).max(pair.phi_min.field.max_excess_over(u)))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbsorbingReport {
    /// `sup_{t in [ε, T]} ‖u(t)‖_∞` for each initial datum.
    pub sup_norms: Vec<f64>,
    pub uniform_bound: f64,
}

impl AbsorbingReport {
    /// Ratio of the largest to the smallest late-time sup norm.
    pub fn spread(&self) -> f64 {
        let lo = self.sup_norms.iter().copied().fold(f64::INFINITY, f64::min);
        if lo > 0.0 {
            self.uniform_bound / lo
        } else if self.uniform_bound == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }
}

/// Runs every datum with the flux clamped at `k` and records the largest
/// sup norm after `epsilon`.
pub fn absorbing_probe(data: &[Field], epsilon: f64, t_end: f64, problem: &Problem, k: f64, cfg: &StepConfig) -> Result<AbsorbingReport> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("absorbing probe needs initial data".into()));
    }
    let sup_norms: Vec<f64> = data
        .par_iter()
        .map(|u0| {
            let tr = cascade::solve_truncated(problem, u0, k, t_end, cfg)?;
            match tr.status {
                Status::Completed => Ok(tr.sup_over(epsilon, t_end)),
                Status::BlownUp { t } => Err(Error::UnexpectedBlowup { t }),
                Status::NewtonFailed { t } => Err(Error::NewtonFailed { t }),
            }
        })
        .collect::<Result<_>>()?;
    let uniform_bound = sup_norms.iter().copied().fold(0.0, f64::max);
    Ok(AbsorbingReport { sup_norms, uniform_bound })
}

/// RK4 substeps per mesh cell in [`shooting`].
pub const SHOOTING_SUBSTEPS: usize = 32;

fn shoot(problem: &Problem, mesh: Mesh1D, s: f64, keep: bool) -> (f64, Vec<f64>) {
    let h = mesh.h() / SHOOTING_SUBSTEPS as f64;
    let rhs = |y: [f64; 2]| [y[1], problem.f.value(y[0])];
    let mut y = [s, -problem.g.value(s)];
    let mut nodes = Vec::with_capacity(if keep { mesh.n() } else { 0 });
    if keep {
        nodes.push(y[0]);
    }
    for _ in 1..mesh.n() {
        for _ in 0..SHOOTING_SUBSTEPS {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for j in 0..2 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if !y[0].is_finite() || y[0].abs() > 1e150 {
                let inf = if y[0] >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
                return (inf, nodes);
            }
        }
        if keep {
            nodes.push(y[0]);
        }
    }
    (y[1] - problem.g.value(y[0]), nodes)
}

/// Equilibrium by shooting on `φ'' = f(φ)` from `φ(0) = s`, `φ'(0) = -g(s)`,
/// matching `φ'(ℓ) = g(φ(ℓ))`; `s` is bracketed around `guess` and refined
/// by bisection. Returns the RK4 solution sampled at the mesh nodes.
pub fn shooting(problem: &Problem, mesh: Mesh1D, guess: f64) -> Result<Field> {
    let mismatch = |s: f64| shoot(problem, mesh, s, false).0;
    let scale = guess.abs().max(1e-3);
    let mut width = 1e-6 * scale;
    let mut bracket = None;
    for _ in 0..60 {
        let (a, b) = (guess - width, guess + width);
        let (ma, mb) = (mismatch(a), mismatch(b));
        if ma.is_nan() || mb.is_nan() {
            break;
        }
        if ma == 0.0 {
            bracket = Some((a, a));
            break;
        }
        if (ma < 0.0) != (mb < 0.0) {
            bracket = Some((a, b));
            break;
        }
        width *= 2.0;
    }
    let (mut a, mut b) = bracket.ok_or(Error::NoConvergence { residual: f64::NAN })?;
    let neg_at_a = mismatch(a) < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (mismatch(mid) < 0.0) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (_, nodes) = shoot(problem, mesh, 0.5 * (a + b), true);
    if nodes.len() != mesh.n() {
        return Err(Error::NoConvergence { residual: f64::INFINITY });
    }
    Field::new(mesh, nodes)
}
