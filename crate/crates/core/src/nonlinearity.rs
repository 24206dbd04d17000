//! Reaction and boundary-flux models.
//!
//! The canonical family is `c|s|^{p-1}s + d s + e`. Interior reactions `f`
//! and boundary fluxes `g` are both drawn from it. A flux can be slope-clamped
//! into a [`TruncatedNonlinearity`], which agrees with `g` on a cut interval
//! `[a_K, b_K]` and continues linearly with slope `K` outside of it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar C¹ nonlinearity evaluated together with its derivative.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    /// Returns `(value, derivative)` at `s`.
    fn eval(&self, s: f64) -> (f64, f64);

    fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    fn derivative(&self, s: f64) -> f64 {
        self.eval(s).1
    }

    /// Leading growth exponent, when the model has one.
    fn growth_exponent(&self) -> Option<f64> {
        None
    }
}

/// Two-sided derivative bounds `p c |s|^{p-1} - lower_shift <= f'(s) <= p C |s|^{p-1} + upper_shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthConstants {
    pub exponent: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    /// `A_0` for `f`, `B_0` for `g`.
    pub lower_shift: f64,
    /// `A_1` for `f`, `B_1` for `g`.
    pub upper_shift: f64,
}

/// `s -> c |s|^{p-1} s + d s + e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerNonlinearity {
    pub c: f64,
    pub p: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub e: f64,
}

impl PowerNonlinearity {
    /// Builds a model. `c = 0` is accepted and gives an affine map; the
    /// growth hypotheses that require `c > 0` are checked by
    /// [`classify_balance`] callers and by config validation.
    pub fn new(c: f64, p: f64, d: f64, e: f64) -> Result<Self> {
        if ![c, p, d, e].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("nonlinearity coefficients must be finite".into()));
        }
        if c < 0.0 {
            return Err(Error::InvalidParameter(format!("leading coefficient c = {c} must be >= 0")));
        }
        if p <= 1.0 {
            return Err(Error::InvalidParameter(format!("growth exponent p = {p} must be > 1")));
        }
        Ok(Self { c, p, d, e })
    }

    /// `c |s|^{p-1} s`.
    pub fn power(c: f64, p: f64) -> Result<Self> {
        Self::new(c, p, 0.0, 0.0)
    }

    /// The zero map.
    pub fn zero() -> Self {
        Self { c: 0.0, p: 2.0, d: 0.0, e: 0.0 }
    }

    /// `s -> d s + e`.
    pub fn affine(d: f64, e: f64) -> Self {
        Self { c: 0.0, p: 2.0, d, e }
    }

    pub fn with_shift(self, e: f64) -> Self {
        Self { e, ..self }
    }

    pub fn at_zero(&self) -> f64 {
        self.e
    }

    /// True when the leading power term is present (`c > 0`).
    pub fn has_power_growth(&self) -> bool {
        self.c > 0.0
    }

    pub fn is_odd(&self) -> bool {
        self.e == 0.0
    }

    pub fn growth_constants(&self) -> GrowthConstants {
        GrowthConstants {
            exponent: self.p,
            c_lower: self.c,
            c_upper: self.c,
            lower_shift: (-self.d).max(0.0),
            upper_shift: self.d.max(0.0),
        }
    }

    /// Lower bound `L` on `f'`, i.e. `f'(s) >= -L` for all `s`.
    pub fn one_sided_lipschitz(&self) -> f64 {
        (-self.d).max(0.0)
    }

    /// Slope-clamped truncation `g_K`.
    pub fn truncate(&self, k: f64) -> Result<TruncatedNonlinearity> {
        TruncatedNonlinearity::new(*self, k)
    }
}

impl Nonlinearity for PowerNonlinearity {
    fn eval(&self, s: f64) -> (f64, f64) {
        if self.c == 0.0 {
            return (self.d * s + self.e, self.d);
        }
        let a = s.abs();
        let pow_m1 = a.powf(self.p - 1.0);
        (self.c * pow_m1 * s + self.d * s + self.e, self.p * self.c * pow_m1 + self.d)
    }

    fn growth_exponent(&self) -> Option<f64> {
        self.has_power_growth().then_some(self.p)
    }
}

/// `g_K`: equal to `g` on `[a_k, b_k]`, linear with slope `k` outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedNonlinearity {
    base: PowerNonlinearity,
    k: f64,
    a_k: f64,
    b_k: f64,
}

impl TruncatedNonlinearity {
    /// Cuts where `g' = K`. For the canonical family this is
    /// `b_K = ((K - d) / (q c))^{1/(q-1)}` and `a_K = -b_K`.
    pub fn new(base: PowerNonlinearity, k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidClamp { k, slope_at_zero: base.d });
        }
        if k <= base.d {
            return Err(Error::InvalidClamp { k, slope_at_zero: base.d });
        }
        let (a_k, b_k) = if base.c == 0.0 {
            // affine flux: g' = d < K everywhere, nothing to cut
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let b = ((k - base.d) / (base.p * base.c)).powf(1.0 / (base.p - 1.0));
            (-b, b)
        };
        Ok(Self { base, k, a_k, b_k })
    }

    pub fn base(&self) -> &PowerNonlinearity {
        &self.base
    }

    pub fn clamp(&self) -> f64 {
        self.k
    }

    pub fn cut_interval(&self) -> (f64, f64) {
        (self.a_k, self.b_k)
    }

    /// Whether `s` lies where `g_K` and `g` coincide.
    pub fn is_inactive_at(&self, s: f64) -> bool {
        s >= self.a_k && s <= self.b_k
    }
}

impl Nonlinearity for TruncatedNonlinearity {
    fn eval(&self, s: f64) -> (f64, f64) {
        if s > self.b_k {
            (self.base.value(self.b_k) + self.k * (s - self.b_k), self.k)
        } else if s < self.a_k {
            (self.base.value(self.a_k) + self.k * (s - self.a_k), self.k)
        } else {
            self.base.eval(s)
        }
    }

    fn growth_exponent(&self) -> Option<f64> {
        None
    }
}

/// Sign of `(p + 1) - 2q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Balance {
    Dissipative,
    Critical,
    Explosive,
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Balance::Dissipative => "dissipative",
            Balance::Critical => "critical",
            Balance::Explosive => "explosive",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceReport {
    pub classification: Balance,
    /// Critical Lebesgue exponent `max{N(p-1)/2, N(q-1)}`.
    pub r0: f64,
    /// Open interval `(1, r0)` of supercritical data exponents, if nonempty.
    pub supercritical_range: Option<(f64, f64)>,
}

impl BalanceReport {
    pub fn is_supercritical(&self, r: f64) -> bool {
        self.supercritical_range.is_some_and(|(lo, hi)| r > lo && r < hi)
    }
}

const BALANCE_EPS: f64 = 1e-12;

/// Classifies interior absorption against boundary forcing in dimension `n`.
pub fn classify_balance(f: &PowerNonlinearity, g: &PowerNonlinearity, dim: u32) -> BalanceReport {
    // a flux without its power term grows linearly
    let (p, q) = (f.p, if g.has_power_growth() { g.p } else { 1.0 });
    let gap = (p + 1.0) - 2.0 * q;
    let classification = if gap.abs() <= BALANCE_EPS {
        Balance::Critical
    } else if gap > 0.0 {
        Balance::Dissipative
    } else {
        Balance::Explosive
    };
    let n = f64::from(dim);
    let r0 = (n * (p - 1.0) / 2.0).max(n * (q - 1.0));
    let supercritical_range = (r0 > 1.0).then_some((1.0, r0));
    BalanceReport { classification, r0, supercritical_range }
}

/// Interior reaction `f` paired with boundary flux `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub f: PowerNonlinearity,
    pub g: PowerNonlinearity,
}

impl Problem {
    pub fn new(f: PowerNonlinearity, g: PowerNonlinearity) -> Self {
        Self { f, g }
    }

    /// `f(s) = s³`, `g(s) = |s|^{1/2} s`.
    pub fn dissipative() -> Self {
        Self { f: PowerNonlinearity { c: 1.0, p: 3.0, d: 0.0, e: 0.0 }, g: PowerNonlinearity { c: 1.0, p: 1.5, d: 0.0, e: 0.0 } }
    }

    /// `f(s) = |s|^5 s`, `g(s) = |s|^{1/2} s`: dissipative with `r0 = 2.5`
    /// in one dimension, so `r = 2` is supercritical.
    pub fn supercritical() -> Self {
        Self { f: PowerNonlinearity { c: 1.0, p: 6.0, d: 0.0, e: 0.0 }, g: PowerNonlinearity { c: 1.0, p: 1.5, d: 0.0, e: 0.0 } }
    }

    pub fn balance(&self) -> BalanceReport {
        classify_balance(&self.f, &self.g, 1)
    }

    pub fn require_dissipative(&self) -> Result<()> {
        match self.balance().classification {
            Balance::Dissipative => Ok(()),
            other => Err(Error::InvalidParameter(format!(
                "p + 1 = {} vs 2q = {}: {other}, not dissipative",
                self.f.p + 1.0,
                2.0 * self.g.p
            ))),
        }
    }

    pub fn truncated_flux(&self, k: f64) -> Result<TruncatedNonlinearity> {
        self.g.truncate(k)
    }

    /// Both `f` and `g` odd.
    pub fn is_odd(&self) -> bool {
        self.f.is_odd() && self.g.is_odd()
    }
}

/// Envelopes used to bound sign-changing solutions from above and below.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePair {
    /// `f^- <= f`, `f^-(0) <= 0`.
    pub f_minus: PowerNonlinearity,
    /// `g^+ >= g_K` on `s >= 0` for every `K`, `g^+(0) >= 0`.
    pub g_plus: PowerNonlinearity,
    /// `f^+ >= f`, `f^+(0) >= 0`.
    pub f_plus: PowerNonlinearity,
    /// `g^- <= g_K` on `s <= 0` for every `K`, `g^-(0) <= 0`.
    pub g_minus: PowerNonlinearity,
}

/// Constant vertical shifts of `f` and `g` that move their value at zero
/// to the required side. Slopes (and thus the growth bounds) are unchanged.
pub fn envelope_pair(f: &PowerNonlinearity, g: &PowerNonlinearity) -> EnvelopePair {
    EnvelopePair {
        f_minus: f.with_shift(f.e.min(0.0)),
        g_plus: g.with_shift(g.e.max(0.0)),
        f_plus: f.with_shift(f.e.max(0.0)),
        g_minus: g.with_shift(g.e.min(0.0)),
    }
}
