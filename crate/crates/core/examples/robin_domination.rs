//! The linear Robin supersolution dominates `|v^K|` for random data.
use bflux::cascade;
use bflux::data;
use bflux::integrator::StepConfig;
use bflux::{Mesh1D, Problem};

fn main() -> bflux::Result<()> {
    let problem = Problem::dissipative();
    let mesh = Mesh1D::unit(257)?;
    let cfg = StepConfig::default().with_dt(1e-3).with_save_interval(1e-2);
    for (i, u0) in data::random_suite(mesh, 4, 7, 0.5, 20.0).iter().enumerate() {
        // the Robin step needs roughly dt K^2 < 1
        for k in [4.0, 8.0, 16.0] {
            let worst = cascade::domination_check(&problem, u0, k, 0.2, &cfg)?;
            println!("datum {i}, K = {k:>4}: max(|v^K| - U) = {worst:.3e}");
        }
    }
    Ok(())
}
