//! Calibrates Poincaré and trace constants on one corpus and checks them on another.
use bflux::data;
use bflux::grid::{self, Mesh1D};

fn main() -> bflux::Result<()> {
    let mesh = Mesh1D::unit(257)?;
    let calib = data::inequality_corpus(mesh, 40, 1);
    let holdout = data::trig_corpus(mesh, 40, 2);

    let c0 = grid::calibrate_poincare(&calib);
    let fails = holdout.iter().filter(|u| !grid::poincare_check(u, c0).satisfied).count();
    println!("poincare: c0 = {c0:.4}, hold-out failures = {fails}");

    for sigma in [2.0, 4.0, 8.0] {
        for delta in [0.1, 1.0, 10.0] {
            let c = grid::calibrate_trace_constant(&calib, sigma, delta);
            let worst = holdout
                .iter()
                .map(|u| grid::trace_inequality_check(u, sigma, delta, c))
                .map(|r| r.lhs - r.rhs)
                .fold(f64::NEG_INFINITY, f64::max);
            println!("trace: sigma = {sigma}, delta = {delta:>4}, C = {c:>8.4}, worst lhs - rhs = {worst:.3e}");
        }
    }
    Ok(())
}
