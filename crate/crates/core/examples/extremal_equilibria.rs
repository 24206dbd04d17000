//! Extremal equilibria from barrier data, compared with a shooting solution.
use bflux::asymptotics;
use bflux::integrator::StepConfig;
use bflux::{Field, Mesh1D, PowerNonlinearity, Problem};

fn main() -> bflux::Result<()> {
    let cfg = StepConfig::default().with_dt(1e-2);

    let bistable = Problem::new(PowerNonlinearity::new(1.0, 3.0, -1.0, 0.0)?, PowerNonlinearity::zero());
    let pair = asymptotics::extremal_equilibria(2.0, 100.0, 1e-9, &bistable, Mesh1D::unit(65)?, &cfg)?;
    println!("s^3 - s: phi_max in [{:.8}, {:.8}], phi_min in [{:.8}, {:.8}]",
        pair.phi_max.field.min(), pair.phi_max.field.max(), pair.phi_min.field.min(), pair.phi_min.field.max());

    let problem = Problem::dissipative();
    let mesh = Mesh1D::unit(1025)?;
    let pair = asymptotics::extremal_equilibria(2.0, 200.0, 1e-8, &problem, mesh, &cfg)?;
    let shot = asymptotics::shooting(&problem, mesh, pair.phi_max.field.values()[0])?;
    println!(
        "dissipative: phi_max(0) = {:.6}, phi_max(1/2) = {:.6}, shooting distance {:.2e}, monotone {}",
        pair.phi_max.field.values()[0],
        pair.phi_max.field.values()[mesh.n() / 2],
        shot.sub(&pair.phi_max.field).sup_norm(),
        pair.trajectories_monotone()
    );
    let zero = asymptotics::solve_equilibrium(&Field::constant(mesh, 0.0), &problem.f, &problem.g)?;
    println!("zero equilibrium between extremals: {}", asymptotics::equilibria_order_check(&[zero], &pair));
    Ok(())
}
