//! Uniform 1D mesh on `(0, length)`, nodal fields, trapezoid-rule norms and
//! numerical checkers for the L¹ Poincaré and trace inequalities.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack applied when reporting whether an inequality holds.
pub const INEQUALITY_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    n: usize,
    length: f64,
}

impl Mesh1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("mesh needs at least 3 nodes, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!("domain length {length} must be positive")));
        }
        Ok(Self { n, length })
    }

    /// Unit interval with `n` nodes.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.length
        } else {
            i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// `|Γ|`: two boundary points in 1D.
    pub fn boundary_measure(&self) -> f64 {
        2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    mesh: Mesh1D,
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Mesh1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for a mesh of {} nodes",
                values.len(),
                mesh.n()
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(mesh: Mesh1D, value: f64) -> Self {
        Self { mesh, values: vec![value; mesh.n()] }
    }

    pub fn from_fn(mesh: Mesh1D, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.nodes().into_iter().map(f).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { mesh: self.mesh, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn sub(&self, other: &Field) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self { mesh: self.mesh, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid integral of the nodal values.
    pub fn integral(&self) -> f64 {
        self.mesh.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// Boundary values `(u(0), u(length))`.
    pub fn trace(&self) -> (f64, f64) {
        (self.values[0], self.values[self.values.len() - 1])
    }

    /// `max_i (self_i - other_i)`; nonpositive iff `self <= other` nodewise.
    pub fn max_excess_over(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `(∫ |u|^σ)^{1/σ}` by the trapezoid rule.
pub fn lebesgue_norm(u: &Field, sigma: f64) -> f64 {
    lebesgue_norm_pow(u, sigma).powf(1.0 / sigma)
}

/// `∫ |u|^σ` by the trapezoid rule.
pub fn lebesgue_norm_pow(u: &Field, sigma: f64) -> f64 {
    let w = u.mesh.weights();
    w.iter().zip(&u.values).map(|(w, v)| w * v.abs().powf(sigma)).sum()
}

/// `L^σ` norm restricted to the central subinterval covering `fraction` of
/// the domain, using the nodes that fall inside it.
pub fn lebesgue_norm_central(u: &Field, sigma: f64, fraction: f64) -> f64 {
    let mesh = u.mesh;
    let half = 0.5 * fraction * mesh.length();
    let mid = 0.5 * mesh.length();
    let h = mesh.h();
    let inside: Vec<usize> = (0..mesh.n()).filter(|&i| (mesh.x(i) - mid).abs() <= half + 1e-12 * mesh.length()).collect();
    if inside.len() < 2 {
        return 0.0;
    }
    let (first, last) = (inside[0], inside[inside.len() - 1]);
    let total: f64 = inside
        .iter()
        .map(|&i| {
            let w = if i == first || i == last { 0.5 * h } else { h };
            w * u.values[i].abs().powf(sigma)
        })
        .sum();
    total.powf(1.0 / sigma)
}

/// `∫ |∇(|u|^{σ/2})|²` with forward differences of `|u_i|^{σ/2}`.
pub fn grad_power_norm(u: &Field, sigma: f64) -> f64 {
    let h = u.mesh.h();
    let half = 0.5 * sigma;
    u.values
        .windows(2)
        .map(|w| {
            let d = (w[1].abs().powf(half) - w[0].abs().powf(half)) / h;
            d * d * h
        })
        .sum()
}

/// `∫_Γ |u|^σ`, i.e. `|u(0)|^σ + |u(ℓ)|^σ`.
pub fn trace_norm(u: &Field, sigma: f64) -> f64 {
    let (a, b) = u.trace();
    a.abs().powf(sigma) + b.abs().powf(sigma)
}

/// `∫ |∇u|` (total variation of the nodal interpolant).
pub fn grad_l1_norm(u: &Field) -> f64 {
    u.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant_used: f64,
    pub satisfied: bool,
}

impl InequalityReport {
    pub fn new(lhs: f64, rhs: f64, constant_used: f64) -> Self {
        Self { lhs, rhs, constant_used, satisfied: lhs <= rhs + INEQUALITY_SLACK }
    }
}

fn poincare_sides(u: &Field) -> (f64, f64) {
    let (a, b) = u.trace();
    let mean = 0.5 * (a + b);
    let lhs = lebesgue_norm_pow(&u.map(|v| v - mean), 1.0);
    (lhs, grad_l1_norm(u))
}

/// `‖u - boundary mean‖_{L¹} <= c0 ‖∇u‖_{L¹}`.
pub fn poincare_check(u: &Field, c0: f64) -> InequalityReport {
    let (lhs, grad) = poincare_sides(u);
    InequalityReport::new(lhs, c0 * grad, c0)
}

/// `∫_Γ |u|^σ <= δ ∫ |∇|u|^{σ/2}|² + C_δ ∫ |u|^σ`.
pub fn trace_inequality_check(u: &Field, sigma: f64, delta: f64, c_delta: f64) -> InequalityReport {
    let lhs = trace_norm(u, sigma);
    let rhs = delta * grad_power_norm(u, sigma) + c_delta * lebesgue_norm_pow(u, sigma);
    InequalityReport::new(lhs, rhs, c_delta)
}

/// Safety factor applied to every calibrated constant.
pub const SAFETY_FACTOR: f64 = 2.0;

/// Loosens an observed upper-bound constant by [`SAFETY_FACTOR`] in the
/// direction that weakens the inequality.
pub fn loosen(observed: f64) -> f64 {
    if observed >= 0.0 {
        SAFETY_FACTOR * observed
    } else {
        observed / SAFETY_FACTOR
    }
}

/// Smallest `c0` satisfying the Poincaré check on the corpus, times the safety factor.
pub fn calibrate_poincare(corpus: &[Field]) -> f64 {
    let worst = corpus
        .iter()
        .filter_map(|u| {
            let (lhs, grad) = poincare_sides(u);
            (grad > 0.0).then(|| lhs / grad)
        })
        .fold(0.0, f64::max);
    loosen(worst)
}

/// Smallest `C_δ` satisfying the trace check on the corpus, times the safety factor.
pub fn calibrate_trace_constant(corpus: &[Field], sigma: f64, delta: f64) -> f64 {
    let worst = corpus
        .iter()
        .filter_map(|u| {
            let mass = lebesgue_norm_pow(u, sigma);
            (mass > 0.0).then(|| (trace_norm(u, sigma) - delta * grad_power_norm(u, sigma)) / mass)
        })
        // constants attain |Γ|/|Ω|, so no valid constant is smaller
        .fold(constant_trace_ratio(corpus), f64::max);
    loosen(worst)
}

fn constant_trace_ratio(corpus: &[Field]) -> f64 {
    corpus.first().map_or(0.0, |u| u.mesh.boundary_measure() / u.mesh.length())
}

/// Writes a header row (`t` then node coordinates) followed by one row per field.
pub fn write_snapshots_csv<W: Write>(mut out: W, times: &[f64], fields: &[Field]) -> io::Result<()> {
    let Some(first) = fields.first() else {
        return Ok(());
    };
    write!(out, "t")?;
    for x in first.mesh.nodes() {
        write!(out, ",{x}")?;
    }
    writeln!(out)?;
    for (t, u) in times.iter().zip(fields) {
        write!(out, "{t}")?;
        for v in &u.values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
