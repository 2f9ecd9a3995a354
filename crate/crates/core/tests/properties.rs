use std::f64::consts::PI;

use fracburgers::barriers::{solve_barrier, BarrierProblem, Face, FaceData, Geometry};
use fracburgers::degiorgi::{truncate, truncation_energies, Sign, TruncationConfig};
use fracburgers::fields::{derivative, norms, random_band_limited, transform, Grid, RealField};
use fracburgers::fracops::{frac_laplacian, harmonic_extension, poisson_semigroup, sqrt_laplacian};
use fracburgers::solver::{run, SolverConfig};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (3usize..8, 1.0f64..40.0).prop_map(|(p, l)| Grid::new(1, 1 << p, l).unwrap()),
        (3usize..6, 1.0f64..20.0).prop_map(|(p, l)| Grid::new(2, 1 << p, l).unwrap()),
    ]
}

fn field_strategy() -> impl Strategy<Value = RealField> {
    (grid_strategy(), 1usize..20, 0.0f64..2.0, 0.1f64..5.0, any::<u64>())
        .prop_map(|(g, band, decay, amp, seed)| random_band_limited(g, band, decay, amp, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(f in field_strategy()) {
        let direct = f.values().iter().map(|v| v * v).sum::<f64>() * f.grid().cell_volume();
        let spectral = transform(&f).l2_squared();
        prop_assert!((direct - spectral).abs() <= 1e-12 * direct.max(1e-300));
    }

    #[test]
    fn round_trips(f in field_strategy()) {
        let back = transform(&f).inverse();
        prop_assert!(back.zip_map(&f, |a, b| a - b).unwrap().linf() <= 1e-12 * f.linf());
        let s = transform(&f);
        let again = transform(&s.inverse());
        let err = s.coeffs().iter().zip(again.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * f.linf());
    }

    #[test]
    fn single_mode_derivative(p in 3usize..8, m in 1i64..20, len in 1.0f64..30.0, phase in 0.0f64..6.3) {
        let g = Grid::new(1, 1 << p, len).unwrap();
        prop_assume!(2 * m < g.n() as i64);
        let k = 2.0 * PI * m as f64 / len;
        let f = RealField::from_fn(g, |x| (k * x[0] + phase).sin());
        let d = derivative(&f, 0, false).unwrap();
        let err = d.zip_map(&RealField::from_fn(g, |x| k * (k * x[0] + phase).cos()), |a, b| a - b).unwrap().linf();
        prop_assert!(err <= 1e-12 * k.max(1.0) * (g.n() as f64));
    }

    #[test]
    fn laplacian_self_adjoint_and_psd(f in field_strategy(), seed in any::<u64>(), alpha in 0.05f64..1.0) {
        let g = random_band_limited(*f.grid(), 12, 0.5, 1.0, seed);
        let lf = frac_laplacian(&f, alpha).unwrap();
        let lg = frac_laplacian(&g, alpha).unwrap();
        let a = lf.inner(&g).unwrap();
        let b = f.inner(&lg).unwrap();
        let scale = lf.linf() * g.linf() + f.linf() * lg.linf();
        prop_assert!((a - b).abs() <= 1e-10 * scale * f.grid().volume());
        prop_assert!(f.inner(&lf).unwrap() >= -1e-12 * scale * f.grid().volume());
    }

    #[test]
    fn hhalf_pairing(f in field_strategy()) {
        let pair = f.inner(&sqrt_laplacian(&f)).unwrap();
        let h = norms(&f).hhalf.powi(2);
        prop_assert!((pair - h).abs() <= 1e-10 * h.max(1e-300));
    }

    #[test]
    fn semigroup_contracts(f in field_strategy(), z1 in 0.0f64..2.0, dz in 0.0f64..2.0) {
        let a = poisson_semigroup(&f, z1).unwrap();
        let b = poisson_semigroup(&f, z1 + dz).unwrap();
        prop_assert!(b.linf() <= a.linf() * (1.0 + 1e-12) + 1e-14);
        prop_assert!(norms(&b).l2 <= norms(&a).l2 * (1.0 + 1e-12) + 1e-14);
        prop_assert!((b.mean() - f.mean()).abs() <= 1e-12 * f.linf());
        let composed = poisson_semigroup(&a, dz).unwrap();
        prop_assert!(composed.zip_map(&b, |x, y| x - y).unwrap().linf() <= 1e-12 * f.linf());
    }

    #[test]
    fn extension_sup_decreases(f in field_strategy()) {
        let zs: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 * i as f64).collect();
        let e = harmonic_extension(&f, &zs).unwrap();
        let sups = e.sup_per_slice();
        for w in sups.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * f.linf());
        }
    }

    #[test]
    fn truncation_is_monotone(f in field_strategy(), a in -5.0f64..5.0, gap in 0.0f64..3.0) {
        let lo = truncate(&f, a);
        let hi = truncate(&f, a + gap);
        prop_assert!(lo.values().iter().zip(hi.values()).all(|(x, y)| x >= y && *y >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn energies_nonincreasing_in_level(seed in any::<u64>(), amp in 0.5f64..3.0, m in 0.2f64..1.5) {
        let g = Grid::new(1, 128, 16.0).unwrap();
        let f = random_band_limited(g, 8, 1.0, amp, seed);
        let mut cfg = SolverConfig::critical(1e-2, 1.0);
        cfg.snapshot_every = 2;
        let traj = run(&f, &cfg).unwrap();
        let tc = TruncationConfig { m, t0: 0.8, k_max: 12, sign: Sign::Positive };
        let seq = truncation_energies(&traj, &tc).unwrap();
        for w in seq.values.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn mean_and_energy_along_runs(seed in any::<u64>(), amp in 0.1f64..4.0, two_d in any::<bool>()) {
        let g = if two_d { Grid::new(2, 32, 2.0 * PI).unwrap() } else { Grid::new(1, 128, 2.0 * PI).unwrap() };
        let f = random_band_limited(g, 6, 1.0, amp, seed).map(|v| v + 0.3);
        let traj = run(&f, &SolverConfig::critical(5e-3, 0.5)).unwrap();
        let l0 = traj.series[0].l2;
        for w in traj.series.windows(2) {
            prop_assert!((w[1].mean - traj.series[0].mean).abs() <= 1e-10);
            prop_assert!(w[1].l2 <= w[0].l2 + 1e-10 * l0);
        }
    }

    #[test]
    fn raising_a_face_never_lowers_the_solution(lift in 0.01f64..1.0, bump in 0.0f64..1.0) {
        let geom = Geometry::Box { n_dim: 1, half_width: 1.0, height: 1.0 };
        let face = Face::low(1);
        let base = BarrierProblem::new(geom, 1.0, 16.0)
            .with_face(face, FaceData::Constant(bump));
        let raised = BarrierProblem::new(geom, 1.0, 16.0)
            .with_face(face, FaceData::Constant(bump + lift));
        let a = solve_barrier(&base).unwrap();
        let b = solve_barrier(&raised).unwrap();
        let ok = a.solution.values.iter().zip(&b.solution.values).all(|(x, y)| *y >= *x - 1e-9);
        prop_assert!(ok);
    }
}
