use std::f64::consts::PI;

use fracburgers::degiorgi::*;
use fracburgers::fields::{random_band_limited, transform, Grid, RealField, SplitMix64};
use fracburgers::solver::{psi_r, run, SolverConfig};
use num_complex::Complex64;

#[test]
fn synthetic_recurrence_law_is_recovered() {
    let ks: Vec<usize> = (0..6).collect();
    let values: Vec<f64> = ks.iter().map(|&k| 0.25f64.powf(2f64.powi(k as i32))).collect();
    let seq = EnergySequence {
        kind: EnergyKind::Global,
        dim: 1,
        levels: vec![0.0; ks.len()],
        times: vec![0.0; ks.len()],
        k: ks,
        values,
        lag: 1,
        k_max_reduced: false,
    };
    let fit = fit_recurrence(&seq);
    assert!(!fit.vacuous);
    assert!((fit.exponent - 2.0).abs() < 0.05, "{}", fit.exponent);
    assert!(fit.inequality_holds());
}

#[test]
fn small_data_energies_collapse() {
    let g = Grid::new(1, 1024, 64.0).unwrap();
    let f0 = RealField::from_fn(g, |x| (-(x[0] - 32.0).powi(2)).exp());
    let traj = run(&f0, &SolverConfig::critical(1e-3, 1.5)).unwrap();
    let t0: f64 = 1.0;
    let cfg = TruncationConfig { m: t0.powf(-0.5), t0, k_max: 25, sign: Sign::Positive };
    let seq = truncation_energies(&traj, &cfg).unwrap();
    assert!(seq.values.windows(2).all(|w| w[1] <= w[0]));
    assert!(seq.get(25).unwrap() < 1e-12);
    assert!(fit_recurrence(&seq).vacuous);
}

#[test]
fn negative_sign_truncates_minus_theta() {
    let g = Grid::new(1, 64, 2.0 * PI).unwrap();
    let f0 = RealField::from_fn(g, |x| -2.0 * x[0].cos().powi(2));
    let mut cfg = SolverConfig::critical(1e-2, 0.5);
    cfg.nonlinearity_scale = 0.0;
    let traj = run(&f0, &cfg).unwrap();
    let pos = TruncationConfig { m: 0.5, t0: 0.4, k_max: 4, sign: Sign::Positive };
    let neg = TruncationConfig { sign: Sign::Negative, ..pos };
    assert!(truncation_energies(&traj, &pos).unwrap().values[1..].iter().all(|&v| v == 0.0));
    assert!(truncation_energies(&traj, &neg).unwrap().values.iter().all(|&v| v > 0.0));
}

fn lei_draws(traj: &fracburgers::solver::Trajectory, c_theta: f64, seed: u64) -> Vec<LEIReport> {
    let zs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.04).collect();
    let cn = estimate_sobolev_constant(*traj.grid(), 100, 3);
    let mut rng = SplitMix64::new(seed);
    (0..20)
        .map(|i| {
            let beta = if i % 2 == 0 { 1.0 } else { 1.0 / c_theta };
            let sign = if rng.next_f64() < 0.3 { -1.0 } else { 1.0 };
            let shift = rng.uniform(-1.5, 0.5) * c_theta;
            let inner = rng.uniform(0.5, 2.0);
            let eta = ExtensionCutoff {
                center: [rng.uniform(12.0, 20.0), 0.0],
                x: Plateau { inner, outer: inner + rng.uniform(0.7, 2.0) },
                z: Plateau { inner: rng.uniform(0.3, 1.5), outer: 3.5 },
            };
            let sigma = (rng.uniform(0.0, 0.6) * 10.0).round() / 10.0;
            let t = sigma + (rng.uniform(0.1, 0.4) * 10.0).round() / 10.0;
            let rescale = AffineRescale::new(sign * beta, shift).unwrap();
            local_energy_residual(traj, &rescale, &eta, (sigma, t), &zs, cn).unwrap()
        })
        .collect()
}

#[test]
fn local_energy_inequality_for_linear_evolution() {
    let g = Grid::new(1, 256, 32.0).unwrap();
    let f0 = random_band_limited(g, 12, 1.0, 2.0, 77);
    let mut cfg = SolverConfig::critical(1e-2, 1.0);
    cfg.nonlinearity_scale = 0.0;
    cfg.snapshot_every = 2;
    let traj = run(&f0, &cfg).unwrap();
    for rep in lei_draws(&traj, f0.linf(), 5) {
        assert!(rep.lhs >= 0.0);
        assert!(rep.passes(1e-6), "{rep:?}");
    }
}

#[test]
fn local_energy_vanishes_above_the_maximum() {
    let g = Grid::new(1, 128, 16.0).unwrap();
    let f0 = random_band_limited(g, 8, 1.0, 1.0, 2);
    let traj = run(&f0, &SolverConfig::critical(1e-2, 0.2)).unwrap();
    let eta = ExtensionCutoff {
        center: [8.0, 0.0],
        x: Plateau { inner: 1.0, outer: 2.0 },
        z: Plateau { inner: 1.0, outer: 2.0 },
    };
    let zs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
    let rescale = AffineRescale::new(1.0, 1.5).unwrap();
    let rep = local_energy_residual(&traj, &rescale, &eta, (0.0, 0.2), &zs, 1.0).unwrap();
    assert_eq!((rep.lhs, rep.rhs, rep.residual), (0.0, 0.0, 0.0));
}

#[test]
fn local_energy_rejects_wrapping_cutoffs() {
    let g = Grid::new(1, 64, 8.0).unwrap();
    let traj = run(&RealField::zeros(g), &SolverConfig::critical(0.1, 0.2)).unwrap();
    let eta = ExtensionCutoff {
        center: [4.0, 0.0],
        x: Plateau { inner: 1.0, outer: 2.0 },
        z: Plateau { inner: 1.0, outer: 2.0 },
    };
    let zs = [0.0, 1.0, 2.0];
    let r = local_energy_residual(&traj, &AffineRescale::new(1.0, 0.0).unwrap(), &eta, (0.0, 0.2), &zs, 1.0);
    assert!(matches!(r, Err(DeGiorgiError::SupportViolation(_))));
}

/// Samples of the trigonometric interpolant and its derivative on a grid
/// `factor` times finer, summed mode by mode.
fn refined_samples(field: &RealField, factor: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let g = field.grid();
    let spec = transform(field);
    let fine = factor * g.n();
    let h = g.length() / fine as f64;
    let modes: Vec<(f64, Complex64)> = (0..g.n())
        .map(|i| (g.wavenumber(i), spec.coeffs()[i]))
        .filter(|(_, c)| c.norm() > 0.0)
        .collect();
    let (mut v, mut dv) = (vec![0.0; fine], vec![0.0; fine]);
    for j in 0..fine {
        let x = j as f64 * h;
        for &(k, c) in &modes {
            let e = c * Complex64::from_polar(1.0, k * x);
            v[j] += e.re;
            dv[j] += (e * Complex64::new(0.0, k)).re;
        }
    }
    (v, dv, h)
}

/// Riemann sum of `ψ_R(θ) θ' (θ − L)₊` over refined samples.
fn riemann(samples: &(Vec<f64>, Vec<f64>, f64), r: f64, shift: f64) -> f64 {
    let (v, dv, h) = samples;
    let s: f64 = v.iter().zip(dv).map(|(&a, &d)| psi_r(a, r) * d * (a - shift).max(0.0)).sum();
    (s * h).abs()
}

#[test]
fn vanishing_property_on_dealiased_fields() {
    let g = Grid::new(1, 128, 2.0 * PI).unwrap();
    for seed in 0..5 {
        let f = random_band_limited(g, 40, 0.5, 1.5, seed);
        let scale = f.linf().powi(3) * g.volume();
        let smooth = random_band_limited(g, 6, 0.5, 1.5, seed);
        let fine = refined_samples(&smooth, 32);
        for r in [0.2, 0.5, 1.0, 1.4, 10.0] {
            for shift in [-1.0, -0.3, 0.0, 0.4, 1.2] {
                let v = vanishing_check(&f, r, shift);
                assert!(v <= 1e-8 * scale, "seed {seed} R {r} L {shift}: {v}");
                // the Riemann sum only sees the kinks to second order
                let oracle = riemann(&fine, r, shift);
                assert!(vanishing_check(&smooth, r, shift) <= 1e-8 * scale);
                assert!(oracle <= 1e-6 * scale, "oracle {oracle}");
            }
        }
    }
    let c = RealField::constant(g, 0.7);
    assert_eq!(vanishing_check(&c, 0.5, 0.0), 0.0);
    let f = random_band_limited(g, 10, 0.5, 1.0, 1);
    assert_eq!(vanishing_check(&f, 0.5, 1.0 + 1e-9), 0.0);
}

#[test]
fn isoperimetric_ramp_converges() {
    let ratios: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let w = BoxField::from_fn(1, n, |p| (p[0] + 1.0) / 2.0).unwrap();
            isoperimetric_ratio(&w).get("ratio").unwrap()
        })
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite()));
    let d1 = (ratios[1] - ratios[0]).abs();
    let d2 = (ratios[2] - ratios[1]).abs();
    let d3 = (ratios[3] - ratios[2]).abs();
    assert!(d2 <= d1 && d3 <= d2, "{ratios:?}");
}

#[test]
fn isoperimetric_ratio_on_random_smooth_fields() {
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let dim = 1 + i % 2;
        let (a, b, c) = (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.5, 3.0));
        let w = BoxField::from_fn(dim, 64, |p| {
            let y = if dim == 2 { p[1] } else { 0.0 };
            0.5 + (a * p[0] + b * y).sin() * c
        })
        .unwrap();
        let rep = isoperimetric_ratio(&w);
        let r = rep.get("ratio").unwrap();
        assert!(r.is_finite(), "{rep:?}");
        worst = worst.max(r);
    }
    assert!(worst > 0.0);
    let flat = BoxField::from_fn(2, 16, |_| 2.0).unwrap();
    assert_eq!(isoperimetric_ratio(&flat).get("ratio"), Some(0.0));
}

/// Condition checks written out directly in base-2 logarithms.
fn recheck(c: &DeGiorgiConstants) {
    let i = c.inputs;
    let n = i.dim as f64;
    let lg_m = c.ln_m / 2f64.ln();
    for k in 1..=i.k_verify {
        let kf = k as f64;
        let left = (2.0 * n * 2.0 * 2f64.sqrt()).log2()
            - (1.0 / (4.0 * (2f64.sqrt() + 1.0) * (2.0 * c.delta).powi(k as i32))) / 2f64.ln();
        assert!(left <= i.lambda.log2() - (kf + 2.0), "delta condition at k = {k}");
    }
    for k in 1..=c.k_m_max {
        let kf = k as f64;
        let left = c.p1_l2.log2() - 0.5 * kf * lg_m - 0.5 * n * (kf + 1.0) * c.delta.log2();
        assert!(left <= i.lambda.log2() - (kf + 2.0), "M condition at k = {k}");
    }
    for k in c.closecircle_range.0..=c.closecircle_range.1 {
        let kf = k as f64;
        let lhs = -kf * lg_m;
        let rhs = kf * i.c0.log2() - (kf - 3.0) * (1.0 + 1.0 / n) * lg_m;
        assert!(lhs >= rhs, "closing condition at k = {k}");
    }
}

#[test]
fn constants_satisfy_every_condition() {
    for (lambda, dim, c0) in [(0.18, 1, 4.0), (0.14, 2, 10.0), (0.01, 1, 1.5), (0.45, 2, 100.0)] {
        let phi = phi_from_bound(dim, 1.0, 1.0);
        let c = degiorgi_constants(&ConstantsInputs::new(lambda, dim, c0, phi)).unwrap();
        recheck(&c);
        assert!(verify_constants(&c).passed);
        assert!(c.delta > 0.0 && c.delta < 0.5 && c.eps0_bound > 0.0);
    }
}

#[test]
fn poisson_kernel_norms_match_closed_forms() {
    assert!((poisson_kernel_l2(1).powi(2) - 1.0 / (2.0 * PI)).abs() < 1e-12);
    assert!((poisson_kernel_l2(2).powi(2) - 1.0 / (8.0 * PI)).abs() < 1e-12);
}

#[test]
fn larger_lambda_admits_larger_delta() {
    let a = degiorgi_constants(&ConstantsInputs::new(0.1, 1, 4.0, 10.0)).unwrap();
    let b = degiorgi_constants(&ConstantsInputs::new(0.3, 1, 4.0, 10.0)).unwrap();
    assert!(b.delta >= a.delta);
}

#[test]
fn doubling_m_helps_the_closing_condition() {
    for dim in [1, 2] {
        for ln_m in [1.0, 5.0, 20.0] {
            for k in 12 * dim..12 * dim + 40 {
                let (l1, r1) = condition_closecircle(4.0, dim, ln_m, k);
                let (l2, r2) = condition_closecircle(4.0, dim, ln_m + 2f64.ln(), k);
                assert!(l2 - r2 > l1 - r1);
            }
        }
    }
}

#[test]
fn cutoff_family_bounds_hold() {
    let g1 = Grid::new(1, 2048, 16.0).unwrap();
    let g2 = Grid::new(2, 256, 16.0).unwrap();
    for k in 0..4 {
        assert!(CutoffFamily { center: [8.0, 0.0] }.verify(&g1, k));
        assert!(CutoffFamily { center: [8.0, 8.0] }.verify(&g2, k));
    }
}

#[test]
fn localized_energies_are_finite_and_resolved() {
    let g = Grid::new(1, 256, 16.0).unwrap();
    let f0 = random_band_limited(g, 10, 1.0, 2.0, 13).map(|v| v + 0.5);
    let mut cfg = SolverConfig::critical(1e-2, 2.5);
    cfg.snapshot_every = 5;
    let traj = run(&f0, &cfg).unwrap();
    let lc = LocalizedConfig {
        rescale: AffineRescale::new(1.0 / f0.linf(), 0.0).unwrap(),
        lambda: 0.18,
        delta: 0.5,
        center: [8.0, 0.0],
        k_max: 10,
        z_step: 0.02,
    };
    let seq = localized_energies(&traj, &lc).unwrap();
    assert!(seq.k_max_reduced && seq.lag == 3);
    assert!(seq.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    let deepest = *seq.k.last().unwrap();
    assert!(0.5f64.powi(deepest as i32) / 0.02 >= 3.0);
}
