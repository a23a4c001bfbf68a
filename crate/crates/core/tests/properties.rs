mod common;

use fracture_qs::crack::CrackSet;
use fracture_qs::evolution::{check_energy_inequality, evolve};
use fracture_qs::io;
use fracture_qs::oracle::{brute_force_step, verify_trajectory, BarOracle};
use fracture_qs::solver::{solve_step_exact, StepOptions};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_step_is_the_enumerated_minimum(seed in any::<u64>(), t in 0.0..=1.0f64) {
        let mut r = common::rng(seed);
        let (p, _) = common::random_problem(&mut r, 64);
        let mesh = &p.mesh;
        let prev: Vec<usize> = (0..mesh.bond_count())
            .filter(|&b| mesh.is_candidate(b) && r.gen_bool(0.3))
            .collect();
        let gamma = CrackSet::from_bonds(mesh, prev).unwrap();
        prop_assume!(common::candidates(mesh, &gamma) <= 10);
        let g = p.load.boundary_values(mesh, t).unwrap();
        let opts = StepOptions { budget: 10, ..Default::default() };
        let d = p.density.as_ref();
        let a = solve_step_exact(mesh, d, &gamma, &g, None, &opts).unwrap();
        let b = brute_force_step(mesh, d, &gamma, &g, None, &opts).unwrap();
        prop_assert_eq!(&a.jump, &b.jump);
        prop_assert_eq!(a.energy().to_bits(), b.energy().to_bits());
        prop_assert!(a.jump.iter().all(|&b| !gamma.contains(b)));
    }

    #[test]
    fn exact_step_is_deterministic(seed in any::<u64>(), t in 0.0..=1.0f64) {
        let mut r = common::rng(seed);
        let (p, _) = common::random_problem(&mut r, 64);
        let g = p.load.boundary_values(&p.mesh, t).unwrap();
        let d = p.density.as_ref();
        let a = solve_step_exact(&p.mesh, d, &p.initial, &g, None, &p.options).unwrap();
        let b = solve_step_exact(&p.mesh, d, &p.initial, &g, None, &p.options).unwrap();
        prop_assert_eq!(&a.jump, &b.jump);
        prop_assert_eq!(a.u.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.u.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn evolutions_are_monotone_and_satisfy_the_inequality(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (p, grid) = common::random_problem(&mut r, 64);
        let traj = evolve(&p, grid).unwrap();
        for w in traj.knots.windows(2) {
            prop_assert!(w[0].broken.iter().all(|b| w[1].broken.contains(b)));
        }
        let report = check_energy_inequality(&traj.ledger);
        prop_assert!(report.holds(1e-8), "{report:?}");
        prop_assert!(verify_trajectory(&p, &traj).unwrap().passed());
    }

    #[test]
    fn ledger_round_trips_bitwise(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (p, grid) = common::random_problem(&mut r, 64);
        let traj = evolve(&p, grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        io::write_ledger(&path, &traj.ledger).unwrap();
        let back = io::read_ledger(&path).unwrap();
        prop_assert_eq!(back.len(), traj.ledger.len());
        for (a, b) in back.iter().zip(&traj.ledger) {
            prop_assert_eq!(
                [a.t, a.bulk, a.surface_c, a.total, a.theta, a.work_cum].map(f64::to_bits),
                [b.t, b.bulk, b.surface_c, b.total, b.theta, b.work_cum].map(f64::to_bits)
            );
        }
    }

    #[test]
    fn bar_oracle_total_is_min_of_elastic_and_cracked(
        l in 0.5..3.0f64, kappa in 0.1..3.0f64, rate in 0.2..3.0f64, t in 0.0..4.0f64,
    ) {
        let o = BarOracle::new(l, kappa, rate, 4.0).unwrap();
        let elastic = (rate * t).powi(2) / l;
        prop_assert!((o.total(t) - elastic.min(kappa)).abs() <= 1e-12 * (1.0 + elastic));
    }
}
