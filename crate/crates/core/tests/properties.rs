use bflux::cascade;
use bflux::harness::ExperimentConfig;
use bflux::integrator::StepConfig;
use bflux::{Field, Mesh1D, Problem};
use proptest::prelude::*;

const BASE: &str = r#"
preset = "cascade"
dt = 1e-3
T = 0.1
k_schedule = [4.0, 8.0, 16.0]
[mesh]
n = 33
[f]
kind = "power"
c = 1.0
p = 6.0
[g]
kind = "power"
c = 1.0
p = 1.5
"#;

fn field(mesh: Mesh1D, v: &[f64]) -> Field {
    Field::new(mesh, v.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ordered_data_stay_ordered(base in prop::collection::vec(-20.0f64..20.0, 33), bump in prop::collection::vec(0.0f64..5.0, 33), k in 2.0f64..16.0) {
        let mesh = Mesh1D::unit(33).unwrap();
        let lo = field(mesh, &base);
        let hi = field(mesh, &base.iter().zip(&bump).map(|(a, b)| a + b).collect::<Vec<_>>());
        let cfg = StepConfig { record_energy: false, ..StepConfig::default().with_dt(1e-3).with_save_interval(1e-2) };
        let problem = Problem::supercritical();
        let a = cascade::solve_truncated(&problem, &lo, k, 0.1, &cfg).unwrap();
        let b = cascade::solve_truncated(&problem, &hi, k, 0.1, &cfg).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            prop_assert!(x.max_excess_over(y) <= 1e-9);
        }
    }

    #[test]
    fn numeric_overrides_round_trip(dt in 1e-6f64..1e-1, n in 3usize..5000) {
        let cfg = ExperimentConfig::parse(BASE, &[format!("dt={dt:e}"), format!("mesh.n={n}")]).unwrap();
        prop_assert_eq!(cfg.dt, dt);
        prop_assert_eq!(cfg.mesh.n, n);
        let again = ExperimentConfig::parse(&cfg.canonical_toml().unwrap(), &[]).unwrap();
        prop_assert_eq!(again, cfg);
    }
}
