//! Calibrated constants.
//!
//! Estimates whose constants are only known to exist are turned into checks
//! by running a calibration suite, taking the tightest constant that the
//! suite satisfies, loosening it by [`grid::SAFETY_FACTOR`] and freezing it in
//! a TOML constants file. Checks then run on disjoint hold-out data.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{self, EnergyConstants};
use crate::error::{Error, Result};
use crate::grid::{self, Field};
use crate::integrator::{self, Status, StepConfig, Trajectory};
use crate::nonlinearity::Problem;

/// Smallest value a calibrated positive constant is allowed to take.
pub const POSITIVE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsFile {
    #[serde(default)]
    pub energy: Vec<EnergyEntry>,
    #[serde(default)]
    pub trace_bound: Vec<TraceBoundEntry>,
    #[serde(default)]
    pub gronwall: Vec<GronwallEntry>,
    #[serde(default)]
    pub inequality: Vec<InequalityEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub preset: String,
    pub sigma: f64,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EnergyEntry {
    pub fn new(preset: &str, c: &EnergyConstants) -> Self {
        Self { preset: preset.into(), sigma: c.sigma, p: c.p, a: c.a, b: c.b, beta: c.beta, gamma: c.gamma }
    }

    pub fn constants(&self) -> EnergyConstants {
        EnergyConstants { sigma: self.sigma, p: self.p, a: self.a, b: self.b, beta: self.beta, gamma: self.gamma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceBoundEntry {
    pub preset: String,
    pub sigma: f64,
    pub epsilon: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallEntry {
    pub preset: String,
    pub k: f64,
    pub r: f64,
    pub c: f64,
}

/// Constants of the static Poincaré (`delta` absent) and trace inequalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityEntry {
    pub name: String,
    pub sigma: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    pub c: f64,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl ConstantsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("constants file: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("constants file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Hex SHA-256 of the serialized file.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn energy(&self, preset: &str, sigma: f64) -> Option<EnergyConstants> {
        self.energy.iter().find(|e| e.preset == preset && same(e.sigma, sigma)).map(EnergyEntry::constants)
    }

    pub fn trace_bound(&self, preset: &str, sigma: f64) -> Option<&TraceBoundEntry> {
        self.trace_bound.iter().find(|e| e.preset == preset && same(e.sigma, sigma))
    }

    pub fn gronwall(&self, preset: &str, k: f64) -> Option<&GronwallEntry> {
        self.gronwall.iter().find(|e| e.preset == preset && same(e.k, k))
    }

    /// Replaces every entry of `preset` with the ones in `other`.
    pub fn merge_preset(&mut self, preset: &str, other: ConstantsFile) {
        self.energy.retain(|e| e.preset != preset);
        self.trace_bound.retain(|e| e.preset != preset);
        self.gronwall.retain(|e| e.preset != preset);
        self.energy.extend(other.energy);
        self.trace_bound.extend(other.trace_bound);
        self.gronwall.extend(other.gronwall);
        for e in other.inequality {
            self.inequality.retain(|x| !(x.name == e.name && same(x.sigma, e.sigma) && x.delta == e.delta));
            self.inequality.push(e);
        }
    }
}

/// Integrates every datum (untruncated flux) in parallel; any run that does
/// not complete is an error.
pub fn run_suite(problem: &Problem, suite: &[Field], t_end: f64, cfg: &StepConfig) -> Result<Vec<Trajectory>> {
    suite
        .par_iter()
        .map(|u0| {
            let tr = integrator::integrate(u0, t_end, &problem.f, &problem.g, cfg)?;
            match tr.status {
                Status::Completed => Ok(tr),
                Status::BlownUp { t } => Err(Error::UnexpectedBlowup { t }),
                Status::NewtonFailed { t } => Err(Error::NewtonFailed { t }),
            }
        })
        .collect()
}

/// The σ-independent absorption constant `A = c_f / 2`.
pub fn absorption_constant(problem: &Problem) -> f64 {
    0.5 * problem.f.c
}

/// Largest energy residual with `B = 0` over every step after the first.
pub fn observed_energy_source(runs: &[Trajectory], sigma: f64, a: f64) -> Result<f64> {
    let probe = EnergyConstants { sigma, p: 2.0, a, b: 0.0, beta: 0.0, gamma: 0.0 };
    let mut worst = f64::NEG_INFINITY;
    for tr in runs {
        let series = cascade::energy_residual_series(tr, &probe)?;
        worst = series.iter().skip(1).map(|r| r.1).fold(worst, f64::max);
    }
    Ok(worst)
}

/// `A`, and per σ the loosened `B_σ` with the derived `β_σ, γ_σ`.
pub fn calibrate_energy(problem: &Problem, runs: &[Trajectory], sigmas: &[f64]) -> Result<Vec<EnergyConstants>> {
    let a = absorption_constant(problem);
    let omega = runs
        .first()
        .map(|tr| tr.mesh.length())
        .ok_or_else(|| Error::InvalidParameter("empty calibration suite".into()))?;
    sigmas
        .iter()
        .map(|&s| {
            let b = grid::loosen(observed_energy_source(runs, s, a)?).max(POSITIVE_FLOOR);
            EnergyConstants::new(s, problem.f.p, a, b, omega)
        })
        .collect()
}

/// Loosened smallest `C` with `∫_ε^T ∫_Γ |u|^σ <= C T + ‖u(ε)‖_σ^σ` on every run.
pub fn calibrate_trace_bound(runs: &[Trajectory], sigma: f64, epsilon: f64) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for tr in runs {
        let (lhs, start) = cascade::trace_bound_sides(tr, sigma, epsilon)?;
        worst = worst.max((lhs - start) / tr.final_time());
    }
    Ok(grid::loosen(worst).max(POSITIVE_FLOOR))
}

/// Loosened Gronwall rate over trajectory pairs, floored at zero.
pub fn calibrate_gronwall(pairs: &[(Trajectory, Trajectory)], r: f64) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for (u, w) in pairs {
        worst = worst.max(cascade::gronwall_exponent(u, w, r)?);
    }
    Ok(grid::loosen(worst).max(0.0))
}

/// Runs pairs of data through `v^K` in parallel.
pub fn run_pairs(problem: &Problem, pairs: &[(Field, Field)], k: f64, t_end: f64, cfg: &StepConfig) -> Result<Vec<(Trajectory, Trajectory)>> {
    pairs
        .par_iter()
        .map(|(a, b)| {
            let ta = cascade::solve_truncated(problem, a, k, t_end, cfg)?;
            let tb = cascade::solve_truncated(problem, b, k, t_end, cfg)?;
            for tr in [&ta, &tb] {
                if let Status::BlownUp { t } | Status::NewtonFailed { t } = tr.status {
                    return Err(Error::UnexpectedBlowup { t });
                }
            }
            Ok((ta, tb))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_file_round_trip() {
        let c = EnergyConstants::new(2.0, 3.0, 0.5, 1.25, 1.0).unwrap();
        let file = ConstantsFile {
            energy: vec![EnergyEntry::new("dissipative", &c)],
            trace_bound: vec![TraceBoundEntry { preset: "dissipative".into(), sigma: 2.0, epsilon: 0.01, c: 3.5 }],
            gronwall: vec![GronwallEntry { preset: "dissipative".into(), k: 8.0, r: 2.0, c: 0.0 }],
            inequality: vec![InequalityEntry { name: "poincare".into(), sigma: 1.0, delta: None, c: 0.3 }],
        };
        let text = file.to_toml().unwrap();
        let back = ConstantsFile::parse(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.energy("dissipative", 2.0), Some(c));
        assert!(back.energy("dissipative", 4.0).is_none());
        assert_eq!(file.hash().unwrap(), back.hash().unwrap());
    }

    #[test]
    fn merge_replaces_preset_entries() {
        let c = EnergyConstants::new(2.0, 3.0, 0.5, 1.0, 1.0).unwrap();
        let d = EnergyConstants::new(2.0, 3.0, 0.5, 2.0, 1.0).unwrap();
        let mut file = ConstantsFile { energy: vec![EnergyEntry::new("a", &c), EnergyEntry::new("b", &c)], ..Default::default() };
        file.merge_preset("a", ConstantsFile { energy: vec![EnergyEntry::new("a", &d)], ..Default::default() });
        assert_eq!(file.energy("a", 2.0), Some(d));
        assert_eq!(file.energy("b", 2.0), Some(c));
    }
}
