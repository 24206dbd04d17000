//! Initial-data generators: seeded random trigonometric polynomials, flat
//! levels and the singular profile `min(|x - ℓ/2|^{-a}, cap)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, Mesh1D};

/// Highest cosine/sine mode in a random trigonometric polynomial.
pub const TRIG_MODES: usize = 6;

/// One random trigonometric polynomial `a0 + Σ (a_k cos + b_k sin)(kπx/ℓ)`
/// with coefficients decaying like `1/k`, scaled to `amplitude`.
pub fn random_trig(mesh: Mesh1D, rng: &mut impl Rng, amplitude: f64) -> Field {
    let a0: f64 = rng.gen_range(-1.0..1.0);
    let coeffs: Vec<(f64, f64)> = (1..=TRIG_MODES)
        .map(|k| {
            let s = 1.0 / k as f64;
            (rng.gen_range(-s..s), rng.gen_range(-s..s))
        })
        .collect();
    let ell = mesh.length();
    Field::from_fn(mesh, |x| {
        let mut v = a0;
        for (k, (a, b)) in coeffs.iter().enumerate() {
            let arg = (k + 1) as f64 * std::f64::consts::PI * x / ell;
            v += a * arg.cos() + b * arg.sin();
        }
        amplitude * v
    })
}

/// `count` random trigonometric fields of unit amplitude.
pub fn trig_corpus(mesh: Mesh1D, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_trig(mesh, &mut rng, 1.0)).collect()
}

/// Boundary layers `e^{-x/λ} + e^{-(ℓ-x)/λ}` for `λ` geometric between `h`
/// and `ℓ`. These approach the extremal ratios of trace-type inequalities,
/// which smooth trigonometric data do not.
pub fn boundary_layer_family(mesh: Mesh1D, count: usize) -> Vec<Field> {
    let (lo, hi) = (mesh.h().ln(), mesh.length().ln());
    let ell = mesh.length();
    (0..count)
        .map(|i| {
            let lambda = (lo + (hi - lo) * i as f64 / (count.max(2) - 1) as f64).exp();
            Field::from_fn(mesh, |x| (-x / lambda).exp() + (-(ell - x) / lambda).exp())
        })
        .collect()
}

/// Trigonometric corpus plus [`boundary_layer_family`], for calibrating
/// static inequality constants.
pub fn inequality_corpus(mesh: Mesh1D, count: usize, seed: u64) -> Vec<Field> {
    let mut c = trig_corpus(mesh, count, seed);
    c.extend(boundary_layer_family(mesh, 24));
    c
}

/// `count` random fields with amplitudes drawn log-uniformly in `[lo, hi]`.
pub fn random_suite(mesh: Mesh1D, count: usize, seed: u64, lo: f64, hi: f64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let amp = (rng.gen_range(lo.ln()..=hi.ln())).exp();
            random_trig(mesh, &mut rng, amp)
        })
        .collect()
}

/// Like [`random_suite`] but with `|u|`, for sign-restricted experiments.
pub fn random_nonnegative_suite(mesh: Mesh1D, count: usize, seed: u64, lo: f64, hi: f64) -> Vec<Field> {
    random_suite(mesh, count, seed, lo, hi).into_iter().map(|u| u.abs()).collect()
}

/// `min(|x - ℓ/2|^{-a}, cap)` where `cap` is the profile value at the
/// node closest to (but not at) the centre.
pub fn singular_profile(mesh: Mesh1D, a: f64) -> Field {
    let mid = 0.5 * mesh.length();
    let nearest = (0..mesh.n())
        .map(|i| (mesh.x(i) - mid).abs())
        .filter(|&d| d > 1e-12 * mesh.length())
        .fold(f64::INFINITY, f64::min);
    let cap = nearest.powf(-a);
    Field::from_fn(mesh, |x| {
        let d = (x - mid).abs();
        if d <= 1e-12 * mesh.length() {
            cap
        } else {
            d.powf(-a).min(cap)
        }
    })
}

/// Singular exponent centred in `(1/r0, 1/r)`, so the profile is in `L^r`
/// but not in `L^{r0}` in the continuum.
pub fn supercritical_exponent(r: f64, r0: f64) -> f64 {
    0.5 * (1.0 / r0 + 1.0 / r)
}
