//! Clamp cascade from a singular supercritical datum, its Cauchy gaps and
//! the distance to the datum as t -> 0.
use bflux::cascade::{self, LimitOptions};
use bflux::data;
use bflux::grid;
use bflux::integrator::StepConfig;
use bflux::{Mesh1D, Problem};

fn main() -> bflux::Result<()> {
    let problem = Problem::supercritical();
    let report = problem.balance();
    let r = 2.0;
    println!("balance {}, r0 = {}", report.classification, report.r0);

    let mesh = Mesh1D::unit(257)?;
    let a = data::supercritical_exponent(r, report.r0);
    let u0 = data::singular_profile(mesh, a);
    let dt = 0.5f64.powi(14);
    let cfg = StepConfig::default().with_dt(dt).with_save_interval(0.5f64.powi(10)).with_sigmas(vec![r]);
    let schedule = [4.0, 8.0, 16.0, 32.0];
    let result = cascade::k_limit(&problem, &u0, &schedule, LimitOptions::new(0.5f64.powi(10), 0.125), &cfg)?;
    println!("cauchy gaps {:?}", result.cauchy_gaps);
    println!("monotone in K: {:?}", result.monotone);

    let times: Vec<f64> = (3..=10).map(|j| 0.5f64.powi(j)).collect();
    for (t, d) in cascade::initial_continuity_check(&result, &u0, 1.5, 0.5, &times)? {
        println!("t = {t:.6}  |v(t) - u0|_1.5 = {d:.4}");
    }
    println!("|u0|_1.5 on the centre = {:.4}", grid::lebesgue_norm_central(&u0, 1.5, 0.5));
    Ok(())
}
