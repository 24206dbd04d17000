//! Balance classification and blow-up detection under dt refinement.
use bflux::integrator::{self, StepConfig};
use bflux::{Field, Mesh1D, PowerNonlinearity, Problem};

fn main() -> bflux::Result<()> {
    let mesh = Mesh1D::unit(65)?;
    for (p, q) in [(3.0, 1.5), (3.0, 2.0), (3.0, 2.5)] {
        let problem = Problem::new(PowerNonlinearity::power(1e-3, p)?, PowerNonlinearity::power(1.0, q)?);
        let factory = |dt: f64| {
            let cfg = StepConfig { record_energy: false, ..StepConfig::default().with_dt(dt).with_save_interval(0.0).adaptive(true) };
            integrator::integrate(&Field::constant(mesh, 10.0), 1.0, &problem.f, &problem.g, &cfg)
        };
        let verdict = integrator::detect_blowup(factory, &[1e-3, 2.5e-4, 6.25e-5], 1e8);
        println!("p = {p}, q = {q}: {} -> {verdict:?}", problem.balance().classification);
    }
    Ok(())
}
