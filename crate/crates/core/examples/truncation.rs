//! Slope-clamped fluxes `g_K` for the canonical `g(s) = s|s|^{1/2}`.
use bflux::{Nonlinearity, PowerNonlinearity};

fn main() -> bflux::Result<()> {
    let g = PowerNonlinearity::power(1.0, 1.5)?;
    println!("{:>6} {:>10} {:>12} {:>12} {:>12}", "K", "b_K", "g_K(b_K)", "g_K(2b_K)", "g(2b_K)");
    for k in [4.0, 8.0, 16.0, 32.0, 64.0] {
        let gk = g.truncate(k)?;
        let (_, b) = gk.cut_interval();
        println!(
            "{k:>6} {b:>10.4} {:>12.4} {:>12.4} {:>12.4}",
            gk.value(b),
            gk.value(2.0 * b),
            g.value(2.0 * b)
        );
        assert!(gk.value(2.0 * b) <= g.value(2.0 * b));
        assert!((gk.derivative(3.0 * b) - k).abs() < 1e-12);
    }
    match g.truncate(-1.0) {
        Err(e) => println!("negative clamp rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
