//! Calibrates energy constants on one suite and checks the smoothing bound
//! on a disjoint one.
use bflux::calibration;
use bflux::cascade;
use bflux::data;
use bflux::integrator::StepConfig;
use bflux::{Field, Mesh1D, Problem};

fn main() -> bflux::Result<()> {
    let problem = Problem::dissipative();
    let mesh = Mesh1D::unit(129)?;
    let sigmas = [2.0, 4.0, 8.0];
    let cfg = StepConfig::default().with_dt(1e-3).with_save_interval(1e-2).with_sigmas(sigmas.to_vec());

    let mut calib = data::random_suite(mesh, 4, 1, 0.5, 30.0);
    for level in [1.0, 3.0, 30.0, 90.0] {
        calib.push(Field::constant(mesh, level));
    }
    calib.push(data::singular_profile(mesh, 0.35));
    let mut hold = data::random_suite(mesh, 4, 2, 0.5, 30.0);
    hold.push(data::singular_profile(mesh, 0.4));

    let calib_runs = calibration::run_suite(&problem, &calib, 1.0, &cfg)?;
    let hold_runs = calibration::run_suite(&problem, &hold, 1.0, &cfg)?;
    for c in calibration::calibrate_energy(&problem, &calib_runs, &sigmas)? {
        let mut worst = f64::NEG_INFINITY;
        let mut energy = f64::NEG_INFINITY;
        for tr in &hold_runs {
            worst = worst.max(cascade::smoothing_bound_check(tr, &c)?.worst_in(1e-2, 1.0));
            energy = energy.max(cascade::energy_residual_monitor(tr, &c)?);
        }
        println!(
            "sigma = {}: A = {}, B = {:.4}, stationary level {:.4}, worst smoothing residual {worst:.4}, worst energy residual {energy:.4}",
            c.sigma,
            c.a,
            c.b,
            c.stationary_level()
        );
    }
    Ok(())
}
