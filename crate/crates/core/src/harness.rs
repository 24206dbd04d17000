//! Experiment configs, presets, CSV output and run manifests.
//!
//! A config is a TOML file with top-level run parameters and `[mesh]`, `[f]`
//! and `[g]` tables (plus optional per-preset tables). Any key can be
//! overridden with `section.key=value`. The `BFLUX_OUT` environment variable
//! replaces `output_dir`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{self, Equilibrium};
use crate::calibration::{self, ConstantsFile, EnergyEntry, GronwallEntry, InequalityEntry, TraceBoundEntry};
use crate::cascade::{self, LimitOptions};
use crate::data;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Mesh1D};
use crate::integrator::{self, Status, StepConfig};
use crate::nonlinearity::{Balance, PowerNonlinearity, Problem};

pub const OUT_ENV: &str = "BFLUX_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Smoothing,
    Dichotomy,
    Cascade,
    Equilibria,
    Calibrate,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Smoothing => "smoothing",
            Preset::Dichotomy => "dichotomy",
            Preset::Cascade => "cascade",
            Preset::Equilibria => "equilibria",
            Preset::Calibrate => "calibrate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: String,
    pub c: f64,
    pub p: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub e: f64,
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<PowerNonlinearity> {
        if self.kind != "power" {
            return Err(Error::Config(format!("unknown nonlinearity kind {:?} (expected \"power\")", self.kind)));
        }
        PowerNonlinearity::new(self.c, self.p, self.d, self.e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub calibration: u64,
    pub holdout: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { calibration: 1, holdout: 2 }
    }
}

/// Initial data of the cascade preset and the random suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `singular`, `flat`, `zero` or `random`.
    pub kind: String,
    pub level: f64,
    /// Singular exponent `a`; defaults to the middle of the admissible window.
    pub exponent: Option<f64>,
    pub suite_size: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { kind: "singular".into(), level: 10.0, exponent: None, suite_size: 6, amplitude_min: 0.5, amplitude_max: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DichotomyConfig {
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub u0: f64,
    pub dt_schedule: Vec<f64>,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        Self {
            p_values: vec![2.5, 3.0, 4.0],
            q_values: vec![1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6],
            u0: 10.0,
            dt_schedule: vec![1e-3, 2.5e-4, 6.25e-5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriaConfig {
    pub m: f64,
    pub t_max: f64,
    pub tol: f64,
    /// Flat Newton starting values.
    pub guesses: Vec<f64>,
    pub absorbing_levels: Vec<f64>,
    pub absorbing_epsilon: f64,
    pub absorbing_t_end: f64,
    pub absorbing_n: usize,
    pub absorbing_dt: f64,
}

impl Default for EquilibriaConfig {
    fn default() -> Self {
        Self {
            m: 2.0,
            t_max: 200.0,
            tol: 1e-8,
            guesses: vec![0.0, 1.0],
            absorbing_levels: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            absorbing_epsilon: 0.1,
            absorbing_t_end: 1.0,
            absorbing_n: 257,
            absorbing_dt: 1e-3,
        }
    }
}

/// Tolerances and auxiliary run parameters of the checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub energy_tol: f64,
    /// Smoothing residuals are checked on `[smoothing_t_min, T]`.
    pub smoothing_t_min: f64,
    pub decay_u0: f64,
    pub decay_dt: f64,
    pub decay_save_interval: f64,
    pub decay_window: (f64, f64),
    pub decay_rel_tol: f64,
    pub continuity_alpha: f64,
    pub interior_fraction: f64,
    /// `d(t_last) <= continuity_rel_tol ‖u0‖_{L^α(Ω₁)}`.
    pub continuity_rel_tol: f64,
    pub domination_tol: f64,
    pub oracle_tol: f64,
    pub absorbing_factor: f64,
    pub gronwall_pairs: usize,
    pub gronwall_dt: f64,
    pub gronwall_t_end: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            energy_tol: 1e-3,
            smoothing_t_min: 1e-3,
            decay_u0: 1e6,
            decay_dt: 1e-6,
            decay_save_interval: 1e-4,
            decay_window: (1e-4, 1e-3),
            decay_rel_tol: 0.15,
            continuity_alpha: 1.5,
            interior_fraction: 0.5,
            continuity_rel_tol: 0.5,
            domination_tol: 1e-6,
            oracle_tol: 1e-6,
            absorbing_factor: 2.0,
            gronwall_pairs: 20,
            gronwall_dt: 1e-3,
            gronwall_t_end: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Key under which calibrated constants are stored.
    #[serde(default = "default_label")]
    pub label: String,
    pub mesh: MeshConfig,
    pub f: NonlinearityConfig,
    pub g: NonlinearityConfig,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub k_schedule: Vec<f64>,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_sigmas")]
    pub sigma_list: Vec<f64>,
    #[serde(default = "default_save")]
    pub save_interval: f64,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_constants")]
    pub constants_file: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub dichotomy: DichotomyConfig,
    #[serde(default)]
    pub equilibria: EquilibriaConfig,
    #[serde(default)]
    pub checks: CheckConfig,
}

fn default_label() -> String {
    "default".into()
}
fn default_r() -> f64 {
    2.0
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_sigmas() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_save() -> f64 {
    1e-2
}
fn default_out() -> PathBuf {
    PathBuf::from("bflux-out")
}
fn default_constants() -> PathBuf {
    PathBuf::from("constants.toml")
}

/// Splits `section.key=value` and parses the value as a TOML value,
/// falling back to a plain string.
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not of the form key=value")))?;
    let keys: Vec<String> = path.trim().split('.').map(str::to_owned).collect();
    if keys.iter().any(String::is_empty) {
        return Err(Error::Config(format!("override {item:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((keys, value))
}

fn apply_override(table: &mut toml::Table, keys: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = keys.split_last().expect("nonempty key path");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path crosses non-table key {k:?}")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text and applies `section.key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (keys, value) = parse_override(item)?;
            apply_override(&mut table, &keys, value)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads a config file; `BFLUX_OUT` (if set) replaces `output_dir`.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let Some(out) = std::env::var_os(OUT_ENV) {
            cfg.output_dir = PathBuf::from(out);
        }
        Ok(cfg)
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem::new(self.f.build()?, self.g.build()?))
    }

    pub fn mesh(&self) -> Result<Mesh1D> {
        Mesh1D::new(self.mesh.n, self.mesh.length)
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig::default()
            .with_dt(self.dt)
            .with_save_interval(self.save_interval)
            .with_sigmas(self.sigma_list.clone())
    }

    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_toml()?.as_bytes())))
    }

    /// Singular exponents `(calibration, hold-out)`: inside `(1/r0, 1/r)` when
    /// `r` is supercritical, inside `(0, 1/r)` otherwise.
    pub fn singular_exponents(&self) -> Result<(f64, f64)> {
        let report = self.problem()?.balance();
        let (lo, hi) = if report.is_supercritical(self.r) { (1.0 / report.r0, 1.0 / self.r) } else { (0.0, 1.0 / self.r) };
        let hold = self.data.exponent.unwrap_or_else(|| 0.5 * (lo + hi));
        Ok((lo + 0.25 * (hi - lo), hold))
    }
}

/// Everything that keeps `cfg` from running; empty when it is runnable.
pub fn validate(cfg: &ExperimentConfig) -> Vec<String> {
    let mut v = Vec::new();
    let f = cfg.f.build();
    let g = cfg.g.build();
    if let Err(e) = &f {
        v.push(format!("f: {e}"));
    }
    if let Err(e) = &g {
        v.push(format!("g: {e}"));
    }
    if cfg.mesh.n < 3 || !(cfg.mesh.length > 0.0) {
        v.push(format!("mesh needs n >= 3 and length > 0 (got n = {}, length = {})", cfg.mesh.n, cfg.mesh.length));
    }
    if !(cfg.r > 1.0) {
        v.push(format!("r = {} must exceed 1", cfg.r));
    }
    if !(cfg.dt > 0.0) {
        v.push(format!("dt = {} must be positive", cfg.dt));
    }
    if !(cfg.t_end > 0.0) {
        v.push(format!("T = {} must be positive", cfg.t_end));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < cfg.t_end) {
        v.push(format!("epsilon = {} must lie in (0, T)", cfg.epsilon));
    }
    if cfg.save_interval < 0.0 {
        v.push("save_interval must be nonnegative".into());
    }
    if cfg.sigma_list.is_empty() || cfg.sigma_list.iter().any(|&s| s < 1.0) {
        v.push("sigma_list must be nonempty with every sigma >= 1".into());
    }
    if let (Ok(f), Ok(g)) = (&f, &g) {
        let report = Problem::new(*f, *g).balance();
        if cfg.preset != Preset::Dichotomy {
            match report.classification {
                Balance::Dissipative => {}
                Balance::Critical => v.push("p+1 = 2q: not Dissipative".into()),
                Balance::Explosive => v.push("p+1 < 2q: not Dissipative".into()),
            }
        }
        if cfg.preset == Preset::Cascade {
            if report.r0 <= 1.0 {
                v.push(format!("r0 = {} ≤ 1: no supercritical range", report.r0));
            } else if !report.is_supercritical(cfg.r) {
                v.push(format!("r = {} outside the supercritical range (1, {})", cfg.r, report.r0));
            }
        }
        if matches!(cfg.preset, Preset::Cascade | Preset::Calibrate) {
            if cfg.k_schedule.len() < 3 || cfg.k_schedule.windows(2).any(|w| w[1] <= w[0]) {
                v.push("k_schedule must be strictly increasing with at least 3 entries".into());
            }
            if cfg.k_schedule.iter().any(|&k| k <= g.d) {
                v.push(format!("every K must exceed the flux slope at zero ({})", g.d));
            }
        }
    }
    if cfg.preset == Preset::Dichotomy {
        let d = &cfg.dichotomy;
        if d.p_values.iter().chain(&d.q_values).any(|&x| x <= 1.0) {
            v.push("dichotomy exponents must exceed 1".into());
        }
        if d.dt_schedule.len() < 3 || d.dt_schedule.windows(2).any(|w| w[1] >= w[0]) {
            v.push("dichotomy dt_schedule must be strictly decreasing with at least 3 entries".into());
        }
    }
    if !["singular", "flat", "zero", "random"].contains(&cfg.data.kind.as_str()) {
        v.push(format!("data.kind {:?} must be singular, flat, zero or random", cfg.data.kind));
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub preset: Preset,
    pub label: String,
    pub config_hash: String,
    pub constants_hash: Option<String>,
    pub checks: Vec<CheckOutcome>,
    /// Time of a blow-up that the preset's balance rules out.
    pub unexpected_blowup: Option<f64>,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// 0 = all checks pass, 2 = a check failed, 3 = unexpected blow-up.
    pub fn exit_code(&self) -> i32 {
        if self.unexpected_blowup.is_some() {
            3
        } else if self.all_passed() {
            0
        } else {
            2
        }
    }
}

/// Exit code for an error that aborted a run.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::UnexpectedBlowup { .. } => 3,
        _ => 1,
    }
}

struct Recorder {
    checks: Vec<CheckOutcome>,
    outputs: Vec<String>,
    out_dir: PathBuf,
    unexpected_blowup: Option<f64>,
    clock: Instant,
}

impl Recorder {
    fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Self { checks: Vec::new(), outputs: Vec::new(), out_dir: out_dir.to_path_buf(), unexpected_blowup: None, clock: Instant::now() })
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        let wall_seconds = self.clock.elapsed().as_secs_f64();
        self.clock = Instant::now();
        self.checks.push(CheckOutcome { name: name.into(), passed, detail: detail.into(), wall_seconds });
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_owned());
        Ok(BufWriter::new(File::create(self.out_dir.join(name))?))
    }
}

/// Runs the preset named in `cfg`, writing CSVs and `manifest.json` into the
/// output directory.
pub fn run_preset(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let violations = validate(cfg);
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("; ")));
    }
    let start = Instant::now();
    let mut rec = Recorder::new(&cfg.output_dir)?;
    match cfg.preset {
        Preset::Smoothing => smoothing(cfg, &mut rec)?,
        Preset::Dichotomy => dichotomy(cfg, &mut rec)?,
        Preset::Cascade => cascade_preset(cfg, &mut rec)?,
        Preset::Equilibria => equilibria(cfg, &mut rec)?,
        Preset::Calibrate => calibrate(cfg, &mut rec)?,
    }
    let constants_hash = if cfg.constants_file.exists() { Some(ConstantsFile::load(&cfg.constants_file)?.hash()?) } else { None };
    rec.outputs.push("manifest.json".into());
    let manifest = RunManifest {
        preset: cfg.preset,
        label: cfg.label.clone(),
        config_hash: cfg.hash()?,
        constants_hash,
        checks: rec.checks,
        unexpected_blowup: rec.unexpected_blowup,
        outputs: rec.outputs,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(cfg.output_dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn cascade_datum(cfg: &ExperimentConfig, mesh: Mesh1D) -> Result<Field> {
    Ok(match cfg.data.kind.as_str() {
        "zero" => Field::constant(mesh, 0.0),
        "flat" => Field::constant(mesh, cfg.data.level),
        "random" => data::random_suite(mesh, 1, cfg.seeds.holdout, cfg.data.amplitude_min, cfg.data.amplitude_max).remove(0),
        _ => data::singular_profile(mesh, cfg.singular_exponents()?.1),
    })
}

/// Calibration suite: random data, flat levels and a singular profile.
///
/// Flat data carry their full size onto the boundary, which is where the
/// calibrated energy and trace constants are attained.
pub fn calibration_suite(cfg: &ExperimentConfig, mesh: Mesh1D) -> Result<Vec<Field>> {
    let d = &cfg.data;
    let mut suite = data::random_suite(mesh, d.suite_size, cfg.seeds.calibration, d.amplitude_min, d.amplitude_max);
    for level in [1.0, 3.0, d.amplitude_max, 3.0 * d.amplitude_max] {
        suite.push(Field::constant(mesh, level));
    }
    suite.push(data::singular_profile(mesh, cfg.singular_exponents()?.0));
    Ok(suite)
}

/// Hold-out suite: random data from the hold-out seed, a flat datum and the
/// singular profile; the singular profile comes last.
pub fn holdout_suite(cfg: &ExperimentConfig, mesh: Mesh1D) -> Result<Vec<Field>> {
    let d = &cfg.data;
    let mut suite = data::random_suite(mesh, d.suite_size, cfg.seeds.holdout, d.amplitude_min, d.amplitude_max);
    suite.push(Field::constant(mesh, d.level));
    suite.push(data::singular_profile(mesh, cfg.singular_exponents()?.1));
    Ok(suite)
}

fn gronwall_pairs(cfg: &ExperimentConfig, mesh: Mesh1D, seed: u64) -> Vec<(Field, Field)> {
    let d = &cfg.data;
    let n = cfg.checks.gronwall_pairs;
    let a = data::random_suite(mesh, n, seed, d.amplitude_min, d.amplitude_max);
    let b = data::random_suite(mesh, n, seed.wrapping_add(1_000_003), d.amplitude_min, d.amplitude_max);
    a.into_iter().zip(b).collect()
}

fn gronwall_step_config(cfg: &ExperimentConfig) -> StepConfig {
    StepConfig { record_energy: false, ..StepConfig::default().with_dt(cfg.checks.gronwall_dt).with_save_interval(cfg.save_interval).with_sigmas(vec![cfg.r]) }
}

fn calibrate(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let problem = cfg.problem()?;
    let mesh = cfg.mesh()?;
    let step = cfg.step_config();
    let suite = calibration_suite(cfg, mesh)?;
    let runs = calibration::run_suite(&problem, &suite, cfg.t_end, &step)?;
    rec.check("calibration runs complete", true, format!("{} runs", runs.len()));

    let mut file = ConstantsFile::default();
    let energy = calibration::calibrate_energy(&problem, &runs, &cfg.sigma_list)?;
    for c in &energy {
        file.energy.push(EnergyEntry::new(&cfg.label, c));
        let c_trace = calibration::calibrate_trace_bound(&runs, c.sigma, cfg.epsilon)?;
        file.trace_bound.push(TraceBoundEntry { preset: cfg.label.clone(), sigma: c.sigma, epsilon: cfg.epsilon, c: c_trace });
    }
    let gcfg = gronwall_step_config(cfg);
    let pairs = gronwall_pairs(cfg, mesh, cfg.seeds.calibration);
    for &k in &cfg.k_schedule {
        let runs = calibration::run_pairs(&problem, &pairs, k, cfg.checks.gronwall_t_end, &gcfg)?;
        let c = calibration::calibrate_gronwall(&runs, cfg.r)?;
        file.gronwall.push(GronwallEntry { preset: cfg.label.clone(), k, r: cfg.r, c });
    }
    let corpus = data::inequality_corpus(mesh, 40, cfg.seeds.calibration);
    file.inequality.push(InequalityEntry { name: "poincare".into(), sigma: 1.0, delta: None, c: grid::calibrate_poincare(&corpus) });
    for &s in &cfg.sigma_list {
        for delta in [0.1, 1.0, 10.0] {
            let c = grid::calibrate_trace_constant(&corpus, s, delta);
            file.inequality.push(InequalityEntry { name: "trace".into(), sigma: s, delta: Some(delta), c });
        }
    }
    let holdout = data::trig_corpus(mesh, 40, cfg.seeds.holdout);
    let ok = file.inequality.iter().all(|e| {
        holdout.iter().all(|u| match e.delta {
            None => grid::poincare_check(u, e.c).satisfied,
            Some(d) => grid::trace_inequality_check(u, e.sigma, d, e.c).satisfied,
        })
    });
    rec.check("static inequalities on hold-out corpus", ok, format!("{} constants", file.inequality.len()));

    let mut merged = if cfg.constants_file.exists() { ConstantsFile::load(&cfg.constants_file)? } else { ConstantsFile::default() };
    merged.merge_preset(&cfg.label, file);
    merged.save(&cfg.constants_file)?;
    let mut w = rec.file("constants.toml")?;
    std::io::Write::write_all(&mut w, merged.to_toml()?.as_bytes())?;
    Ok(())
}

fn require_constants(cfg: &ExperimentConfig) -> Result<ConstantsFile> {
    if !cfg.constants_file.exists() {
        return Err(Error::Config(format!(
            "constants file {} not found; run the calibrate preset first",
            cfg.constants_file.display()
        )));
    }
    ConstantsFile::load(&cfg.constants_file)
}

fn smoothing(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let problem = cfg.problem()?;
    let mesh = cfg.mesh()?;
    let consts_file = require_constants(cfg)?;
    let consts: Vec<_> = cfg
        .sigma_list
        .iter()
        .map(|&s| {
            consts_file
                .energy(&cfg.label, s)
                .ok_or_else(|| Error::Config(format!("no energy constants for label {:?}, sigma = {s}", cfg.label)))
        })
        .collect::<Result<_>>()?;
    let step = cfg.step_config();
    let suite = holdout_suite(cfg, mesh)?;
    let runs = calibration::run_suite(&problem, &suite, cfg.t_end, &step)?;

    for c in &consts {
        let mut worst = f64::NEG_INFINITY;
        let mut level = f64::NEG_INFINITY;
        let mut energy = f64::NEG_INFINITY;
        for tr in &runs {
            let rep = cascade::smoothing_bound_check(tr, c)?;
            worst = worst.max(rep.worst_in(cfg.checks.smoothing_t_min, cfg.t_end));
            level = level.max(rep.level_excess);
            energy = energy.max(cascade::energy_residual_monitor(tr, c)?);
        }
        rec.check(format!("smoothing bound (sigma = {})", c.sigma), worst <= 0.0, format!("worst residual {worst:e}"));
        if (c.sigma - cfg.r).abs() < 1e-12 {
            rec.check(format!("stationary level bound (sigma = {})", c.sigma), level <= grid::INEQUALITY_SLACK, format!("worst excess {level:e}"));
        }
        rec.check(
            format!("energy inequality (sigma = {})", c.sigma),
            energy <= cfg.checks.energy_tol,
            format!("worst residual {energy:e}, A = {}, B = {}", c.a, c.b),
        );
        if let Some(tb) = consts_file.trace_bound(&cfg.label, c.sigma) {
            let ok = runs
                .iter()
                .map(|tr| cascade::trace_bound_check(tr, c.sigma, tb.epsilon, tb.c).map(|r| r.satisfied))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .all(|b| b);
            rec.check(format!("boundary trace integral (sigma = {})", c.sigma), ok, format!("C = {}", tb.c));
        }
    }
    let a_same = consts.windows(2).all(|w| w[0].a == w[1].a);
    rec.check("absorption constant independent of sigma", a_same, format!("A = {}", consts[0].a));

    let chk = &cfg.checks;
    let dcfg = StepConfig { record_energy: false, ..StepConfig::default().with_dt(chk.decay_dt).with_save_interval(chk.decay_save_interval).with_sigmas(vec![cfg.r]) };
    let tr = integrator::integrate(&Field::constant(mesh, chk.decay_u0), chk.decay_window.1, &problem.f, &problem.g, &dcfg)?;
    let slope = cascade::decay_exponent_fit(&tr, cfg.r, chk.decay_window)?;
    let expected = -1.0 / (problem.f.p - 1.0);
    rec.check(
        "decay exponent",
        (slope - expected).abs() <= chk.decay_rel_tol * expected.abs(),
        format!("slope {slope:.4}, expected {expected:.4}"),
    );

    let headline = runs.last().expect("hold-out suite is nonempty");
    headline.write_norms_csv(rec.file("norms.csv")?, true)?;
    let triples: Vec<(f64, f64, f64)> = consts.iter().map(|c| (c.sigma, c.a, c.b)).collect();
    headline.write_energy_csv(rec.file("energy.csv")?, &triples, true)?;
    headline.write_snapshots_csv(rec.file("snapshots.csv")?)?;
    Ok(())
}

fn dichotomy(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let mesh = cfg.mesh()?;
    let d = &cfg.dichotomy;
    let (fc, gc) = (cfg.f.build()?, cfg.g.build()?);
    let mut rows = Vec::new();
    let mut unexpected = None;
    let mut confirmed_any = false;
    for &p in &d.p_values {
        for &q in &d.q_values {
            let problem = Problem::new(PowerNonlinearity { p, ..fc }, PowerNonlinearity { p: q, ..gc });
            let balance = problem.balance().classification;
            let factory = |dt: f64| {
                let step = StepConfig { record_energy: false, ..StepConfig::default().with_dt(dt).with_save_interval(cfg.save_interval).adaptive(true).with_sigmas(vec![cfg.r]) };
                integrator::integrate(&Field::constant(mesh, d.u0), cfg.t_end, &problem.f, &problem.g, &step)
            };
            let tr = factory(d.dt_schedule[0])?;
            let t_blow = match tr.status {
                Status::BlownUp { t } => Some(t),
                Status::NewtonFailed { t } => return Err(Error::NewtonFailed { t }),
                Status::Completed => None,
            };
            let mut confirmed = false;
            if balance == Balance::Dissipative {
                if let Some(t) = t_blow {
                    unexpected.get_or_insert(t);
                }
            } else if t_blow.is_some() {
                confirmed = match integrator::detect_blowup(factory, &d.dt_schedule, StepConfig::default().blowup_threshold) {
                    Ok(v) => v.confirmed,
                    Err(Error::Inconclusive { .. }) => false,
                    Err(e) => return Err(e),
                };
                confirmed_any |= confirmed;
            }
            rows.push((p, q, balance, t_blow, confirmed, tr.sup_series.iter().copied().fold(0.0, f64::max)));
        }
    }
    let mut w = rec.file("dichotomy.csv")?;
    use std::io::Write;
    writeln!(w, "p,q,balance,blew_up,t_blowup,confirmed,max_sup")?;
    for (p, q, b, t, c, s) in &rows {
        let tb = t.map(|t| t.to_string()).unwrap_or_default();
        writeln!(w, "{p},{q},{b},{},{tb},{c},{s}", t.is_some())?;
    }
    drop(w);
    let dissipative = rows.iter().filter(|r| r.2 == Balance::Dissipative).count();
    rec.check("dissipative points stay bounded", unexpected.is_none(), format!("{dissipative} dissipative points"));
    let explosive = rows.iter().filter(|r| r.2 == Balance::Explosive).count();
    rec.check(
        "blow-up confirmed under refinement on the explosive side",
        confirmed_any || explosive == 0,
        format!("{} of {explosive} explosive points confirmed", rows.iter().filter(|r| r.4).count()),
    );
    rec.unexpected_blowup = unexpected;
    Ok(())
}

fn cascade_preset(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let problem = cfg.problem()?;
    let mesh = cfg.mesh()?;
    let u0 = cascade_datum(cfg, mesh)?;
    let step = StepConfig { record_energy: false, ..cfg.step_config() };
    let result = cascade::k_limit(&problem, &u0, &cfg.k_schedule, LimitOptions::new(cfg.epsilon, cfg.t_end), &step);
    let result = match result {
        Ok(r) => r,
        Err(Error::ScheduleNotCauchy { gaps }) => {
            rec.check("Cauchy gaps shrink along the clamp schedule", false, format!("{gaps:?}"));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    rec.check("Cauchy gaps shrink along the clamp schedule", true, format!("{:?}", result.cauchy_gaps));
    if let Some(m) = result.monotone {
        rec.check("order in the clamp", m, if u0.min() >= 0.0 { "nondecreasing in K" } else { "nonincreasing in K" });
    }
    let inactive = result.truncation_inactive_after(&problem, cfg.epsilon)?;
    rec.check("truncation inactive after the transient (largest K)", *inactive.last().unwrap_or(&false), format!("{inactive:?}"));

    let mut worst = f64::NEG_INFINITY;
    for &k in &cfg.k_schedule {
        worst = worst.max(cascade::domination_check(&problem, &u0, k, cfg.t_end, &step)?);
    }
    rec.check("domination by the Robin supersolution", worst <= cfg.checks.domination_tol, format!("worst violation {worst:e}"));

    let chk = &cfg.checks;
    let limit = result.limit();
    let times: Vec<f64> = (0..60)
        .map(|j| 0.5f64.powi(j))
        .filter(|&t| t <= cfg.t_end && limit.at_time(t, 1e-9 * t).is_some())
        .collect();
    let series = cascade::initial_continuity_check(&result, &u0, chk.continuity_alpha, chk.interior_fraction, &times)?;
    let scale = grid::lebesgue_norm_central(&u0, chk.continuity_alpha, chk.interior_fraction);
    let decreasing = series.windows(2).all(|w| w[1].1 <= w[0].1 + grid::INEQUALITY_SLACK);
    let last = series.last().map_or(0.0, |s| s.1);
    rec.check(
        "continuity at the initial time",
        decreasing && last <= chk.continuity_rel_tol * scale + grid::INEQUALITY_SLACK,
        format!("d(t_last) = {last:e}, ‖u0‖ = {scale:e}"),
    );

    if let Ok(file) = require_constants(cfg) {
        let gcfg = gronwall_step_config(cfg);
        let pairs = gronwall_pairs(cfg, mesh, cfg.seeds.holdout);
        for &k in &cfg.k_schedule {
            let Some(entry) = file.gronwall(&cfg.label, k) else { continue };
            let runs = calibration::run_pairs(&problem, &pairs, k, chk.gronwall_t_end, &gcfg)?;
            let worst = runs
                .iter()
                .map(|(a, b)| cascade::gronwall_check(a, b, cfg.r, entry.c))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            rec.check(format!("Gronwall contraction (K = {k})"), worst <= 1.0 + grid::INEQUALITY_SLACK, format!("C = {}, worst ratio {worst}", entry.c));
        }
    }

    result.write_csv(rec.file("cascade.csv")?)?;
    result.limit().write_norms_csv(rec.file("norms.csv")?, true)?;
    result.limit().write_snapshots_csv(rec.file("snapshots.csv")?)?;
    Ok(())
}

fn equilibria(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let problem = cfg.problem()?;
    let mesh = cfg.mesh()?;
    let e = &cfg.equilibria;
    let step = StepConfig::default().with_dt(cfg.dt);
    let pair = asymptotics::extremal_equilibria(e.m, e.t_max, e.tol, &problem, mesh, &step)?;
    rec.check("trajectories from the barriers are monotone in time", pair.trajectories_monotone(), format!(
        "defects {:e} / {:e}",
        pair.upper_monotonicity_defect, pair.lower_monotonicity_defect
    ));
    let tol = cfg.checks.oracle_tol;
    let mut oracle = Vec::new();
    for eq in [&pair.phi_max, &pair.phi_min] {
        let shot = asymptotics::shooting(&problem, mesh, eq.field.values()[0])?;
        oracle.push(shot.sub(&eq.field).sup_norm());
    }
    let worst = oracle.iter().copied().fold(0.0, f64::max);
    rec.check("extremal equilibria match the shooting oracle", worst <= tol, format!("sup distance {worst:e}"));
    if problem.is_odd() {
        let sym = pair.phi_max.field.values().iter().zip(pair.phi_min.field.values()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        rec.check("odd problem gives symmetric extremals", sym <= ORDER_TOL, format!("{sym:e}"));
    }
    let found: Vec<Equilibrium> = e
        .guesses
        .iter()
        .filter_map(|&g| asymptotics::solve_equilibrium(&Field::constant(mesh, g), &problem.f, &problem.g).ok())
        .collect();
    rec.check(
        "every Newton equilibrium lies between the extremals",
        asymptotics::equilibria_order_check(&found, &pair),
        format!("{} equilibria found", found.len()),
    );

    let amesh = Mesh1D::new(e.absorbing_n, cfg.mesh.length)?;
    let data: Vec<Field> = e.absorbing_levels.iter().map(|&v| Field::constant(amesh, v)).collect();
    let acfg = StepConfig { record_energy: false, ..StepConfig::default().with_dt(e.absorbing_dt).with_save_interval(e.absorbing_dt) };
    let kmax = cfg.k_schedule.last().copied().unwrap_or(1e6);
    let probe = asymptotics::absorbing_probe(&data, e.absorbing_epsilon, e.absorbing_t_end, &problem, kmax, &acfg)?;
    rec.check(
        "late-time sup norms are uniform in the data",
        probe.spread() < cfg.checks.absorbing_factor,
        format!("sup norms {:?}", probe.sup_norms),
    );
    pair.write_csv(rec.file("equilibria.csv")?, &found)?;
    Ok(())
}

const ORDER_TOL: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
preset = "smoothing"
dt = 1e-3
T = 1.0
[mesh]
n = 65
[f]
kind = "power"
c = 1.0
p = 3.0
[g]
kind = "power"
c = 1.0
p = 1.5
"#;

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::parse(BASE, &["g.p=2.0".into(), "preset=cascade".into(), "output_dir=elsewhere".into()]).unwrap();
        assert_eq!(cfg.g.p, 2.0);
        assert_eq!(cfg.preset, Preset::Cascade);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
        assert!(ExperimentConfig::parse(BASE, &["nonsense".into()]).is_err());
        assert!(ExperimentConfig::parse(BASE, &["mesh.bogus=1".into()]).is_err());
    }

    #[test]
    fn validation_examples() {
        let cfg = ExperimentConfig::parse(BASE, &["g.p=2.0".into()]).unwrap();
        assert_eq!(validate(&cfg), vec!["p+1 = 2q: not Dissipative".to_string()]);

        let cfg = ExperimentConfig::parse(BASE, &["preset=cascade".into(), "f.p=2.0".into(), "g.p=1.2".into(), "r=1.2".into(), "k_schedule=[4.0, 8.0, 16.0]".into()]).unwrap();
        let v = validate(&cfg);
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("r0 = 0.5 ≤ 1"));

        let cfg = ExperimentConfig::parse(BASE, &["preset=cascade".into(), "f.p=4.0".into(), "r=1.2".into(), "k_schedule=[4.0, 8.0, 16.0]".into()]).unwrap();
        assert!(validate(&cfg).is_empty());

        let cfg = ExperimentConfig::parse(BASE, &["preset=dichotomy".into(), "g.p=2.5".into()]).unwrap();
        assert!(validate(&cfg).is_empty());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse(BASE, &[]).unwrap();
        let b = ExperimentConfig::parse(BASE, &["dt=2e-3".into()]).unwrap();
        assert_eq!(a.hash().unwrap(), ExperimentConfig::parse(BASE, &[]).unwrap().hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn exit_codes() {
        let mut m = RunManifest {
            preset: Preset::Cascade,
            label: "x".into(),
            config_hash: String::new(),
            constants_hash: None,
            checks: vec![CheckOutcome { name: "a".into(), passed: true, detail: String::new(), wall_seconds: 0.0 }],
            unexpected_blowup: None,
            outputs: vec![],
            wall_seconds: 0.0,
        };
        assert_eq!(m.exit_code(), 0);
        m.checks[0].passed = false;
        assert_eq!(m.exit_code(), 2);
        m.unexpected_blowup = Some(0.1);
        assert_eq!(m.exit_code(), 3);
        assert_eq!(error_exit_code(&Error::Config("x".into())), 1);
    }
}
