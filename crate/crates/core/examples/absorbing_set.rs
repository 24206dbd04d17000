//! Late-time sup norms forget the size of the data.
use bflux::asymptotics;
use bflux::integrator::StepConfig;
use bflux::{Field, Mesh1D, Problem};

fn main() -> bflux::Result<()> {
    let mesh = Mesh1D::unit(257)?;
    let data: Vec<Field> = [1.0, 10.0, 100.0, 1e3, 1e4].iter().map(|&v| Field::constant(mesh, v)).collect();
    let cfg = StepConfig { record_energy: false, ..StepConfig::default().with_dt(1e-3).with_save_interval(1e-3) };
    let report = asymptotics::absorbing_probe(&data, 0.1, 1.0, &Problem::dissipative(), 64.0, &cfg)?;
    println!("sup over [0.1, 1]: {:?}", report.sup_norms);
    println!("spread (max/min): {:.4}", report.spread());
    Ok(())
}
