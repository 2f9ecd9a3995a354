use fracburgers::barriers::*;

#[test]
fn b1_gap_lies_in_the_admissible_range() {
    let r = b1_lambda(1, 8.0).unwrap();
    let lambda = r.lambda_estimate.unwrap();
    assert!(lambda > 0.0 && lambda < 0.5);
    assert!(r.max_on_subregion.unwrap() < 2.0);
    assert!(r.maximum_principle_holds());
}

#[test]
fn b1_refinement_is_consistent() {
    let r = b1_lambda_refined(1, &[8.0, 16.0, 32.0]).unwrap();
    let l: Vec<f64> = r.refinement_history.iter().map(|p| p.1).collect();
    assert!(((l[1] - l[0]) / l[1]).abs() < 0.05);
    assert!(((l[2] - l[1]) / l[2]).abs() < 0.05);
    // second order: differences shrink by about four
    let q = (l[1] - l[0]) / (l[2] - l[1]);
    assert!(q > 3.0 && q < 5.0, "{q}");
}

#[test]
fn lambda_star_within_bracket_and_monotone() {
    let (k0, lambda) = (1, 0.25);
    let s = lambda_star_estimate(1, k0, lambda, 512.0).unwrap();
    assert!(s > 0.0 && s < lambda.min(1.0) / 2f64.powi(k0 as i32 + 1), "{s}");
    let s2 = lambda_star_estimate(1, k0, 0.4, 512.0).unwrap();
    assert!(s2 > s);
    assert_eq!(lambda_star_estimate(1, k0, 0.0, 512.0).unwrap(), 0.0);
}

#[test]
fn strip_barrier_obeys_the_bound() {
    let r = strip_bound_check(8.0, 32.0).unwrap();
    assert!(r.passed);
    assert!(r.get("max_gap").unwrap() <= STRIP_GAP_TOLERANCE);
    assert!(r.get("decay_rate").unwrap() <= -std::f64::consts::PI + 0.05);
}

#[test]
fn two_dimensional_box_keeps_the_maximum_principle() {
    let p = BarrierProblem::new(Geometry::Box { n_dim: 2, half_width: 1.0, height: 1.0 }, 1.0, 8.0)
        .with_face(Face::low(2), FaceData::Function(std::sync::Arc::new(|p: &[f64]| p[0] * p[1])));
    let r = solve_barrier(&p);
    // 1 unit at resolution 8 gives only 9 points in z
    assert!(matches!(r, Err(BarrierError::InvalidProblem(_))));
    let p = BarrierProblem { resolution: 16.0, ..p };
    let r = solve_barrier(&p).unwrap();
    assert!(r.maximum_principle_holds());
    assert!(r.boundary_range.0 < 0.0 && r.boundary_range.1 == 1.0);
}
