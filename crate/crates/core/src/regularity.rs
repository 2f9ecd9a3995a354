//! Measurements on whole trajectories: the `L∞` decay ratio,
//! oscillation decay over nested cylinders, and the Duhamel reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fields::{transform, FieldError, RealField, Spectrum};
use crate::numerics::fit_line;
use crate::solver::{SolverConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegularityError {
    #[error("window outside trajectory: {0}")]
    Window(String),
    #[error("time {0} is not a snapshot time")]
    OffLadder(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no cylinder level is resolvable")]
    Unresolvable,
    #[error(transparent)]
    Field(#[from] FieldError),
}

type Result<T> = std::result::Result<T, RegularityError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub window: (f64, f64),
    pub times: Vec<f64>,
    /// `t^{N/2}‖θ(t)‖∞ / ‖θ₀‖₂` per snapshot in the window.
    pub ratios: Vec<f64>,
    pub sup_ratio: f64,
    /// `‖θ₀‖₂`; all ratios are 0 when it vanishes.
    pub initial_l2: f64,
    pub mean_zero: bool,
    /// `‖θ‖∞` nonincreasing along the whole step series (relative slack 1e−8).
    pub linf_nonincreasing: bool,
}

/// Default window `[10·dt, length/4]`, clipped to the trajectory.
pub fn default_decay_window(traj: &Trajectory) -> (f64, f64) {
    (10.0 * traj.config.dt, (traj.grid().length() / 4.0).min(traj.t_final()))
}

pub fn decay_report(traj: &Trajectory, window: (f64, f64)) -> Result<DecayReport> {
    let (lo, hi) = window;
    let tf = traj.t_final();
    let slack = 1e-9 * tf.max(traj.config.dt);
    if !(lo >= 0.0 && lo <= hi && hi <= tf + slack) {
        return Err(RegularityError::Window(format!("[{lo}, {hi}] not inside [0, {tf}]")));
    }
    let snaps = traj.window(lo, hi);
    if snaps.is_empty() {
        return Err(RegularityError::Window(format!("no snapshots in [{lo}, {hi}]")));
    }
    let init = &traj.series[0];
    let half_dim = traj.grid().dim() as f64 / 2.0;
    let ratios: Vec<f64> = snaps
        .iter()
        .map(|s| {
            if init.l2 == 0.0 {
                0.0
            } else {
                s.t.powf(half_dim) * s.field.linf() / init.l2
            }
        })
        .collect();
    let linf0 = init.linf;
    let linf_nonincreasing =
        traj.series.windows(2).all(|w| w[1].linf <= w[0].linf + 1e-8 * linf0);
    Ok(DecayReport {
        window,
        times: snaps.iter().map(|s| s.t).collect(),
        sup_ratio: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
        initial_l2: init.l2,
        mean_zero: init.mean.abs() <= 1e-12 * init.linf.max(f64::MIN_POSITIVE),
        linf_nonincreasing,
    })
}

/// Optional extension levels for the oscillation cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionLevels {
    pub z_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub center_t: f64,
    pub center_x: [f64; 2],
    pub ratio: f64,
    pub k: Vec<usize>,
    pub osc: Vec<f64>,
    /// `None` when some oscillation vanishes or fewer than two levels exist.
    pub fitted_alpha: Option<f64>,
    pub r_squared: Option<f64>,
    /// `R² ≥ 0.8`; below that the slope is not a verdict.
    pub verdict_allowed: bool,
    pub k_max_reduced: bool,
    pub used_extension: bool,
}

/// Minimum fit quality for a Hölder verdict.
pub const MIN_R_SQUARED: f64 = 0.8;

/// `osc_k = sup − inf` of `θ` (or `θ*`) over `[t₀ − r^k, t₀] × B_{r^k}(x₀)`
/// (times `[0, r^k]` in `z`), `k = 1..=k_max`; the Hölder exponent is the
/// slope of `ln osc_k` against `k ln r`. Levels whose cylinder holds fewer than
/// 3 snapshots or 4 points per axis are dropped from the deep end.
pub fn oscillation_profile(
    traj: &Trajectory,
    center: (f64, [f64; 2]),
    r: f64,
    k_max: usize,
    extension: Option<ExtensionLevels>,
) -> Result<OscillationReport> {
    if !(r > 0.0 && r < 1.0) {
        return Err(RegularityError::InvalidParameter(format!("r must lie in (0, 1), got {r}")));
    }
    if k_max == 0 {
        return Err(RegularityError::InvalidParameter("k_max must be >= 1".into()));
    }
    if let Some(e) = extension {
        if !(e.z_step > 0.0) {
            return Err(RegularityError::InvalidParameter("z_step must be positive".into()));
        }
    }
    let (t0, x0) = center;
    if traj.snapshot_index(t0).is_none() {
        return Err(RegularityError::OffLadder(t0));
    }
    let grid = *traj.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let resolvable = |k: usize| {
        let rk = r.powi(k as i32);
        let pts = 2 * (rk / h + 1e-9).floor() as usize + 1;
        let snaps = traj.window(t0 - rk, t0).len();
        let z_ok = extension.is_none_or(|e| (rk / e.z_step + 1e-9).floor() as usize + 1 >= 4);
        pts >= 4 && snaps >= 3 && 2.0 * rk < grid.length() && z_ok
    };
    let mut deepest = k_max;
    while deepest > 0 && !resolvable(deepest) {
        deepest -= 1;
    }
    if deepest == 0 {
        return Err(RegularityError::Unresolvable);
    }
    let wrap = |x: f64, c: f64| {
        let l = grid.length();
        (x - c + 0.5 * l).rem_euclid(l) - 0.5 * l
    };
    let ks: Vec<usize> = (1..=deepest).collect();
    let osc: Vec<f64> = ks
        .par_iter()
        .map(|&k| {
            let rk = r.powi(k as i32);
            let inside: Vec<usize> = (0..grid.total_points())
                .filter(|&i| {
                    let p = grid.point(i);
                    (0..dim).all(|j| wrap(p[j], x0[j]).abs() <= rk + 1e-12 * rk)
                })
                .collect();
            let zs: Vec<f64> = match extension {
                None => vec![0.0],
                Some(e) => {
                    let m = (rk / e.z_step + 1e-9).floor() as usize;
                    (0..=m).map(|j| j as f64 * e.z_step).collect()
                }
            };
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in traj.window(t0 - rk, t0) {
                let spec = transform(&s.field);
                for &z in &zs {
                    let f = if z == 0.0 {
                        s.field.clone()
                    } else {
                        spec.apply_radial(|kk| (-z * kk).exp()).inverse()
                    };
                    for &i in &inside {
                        let v = f.values()[i];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            hi - lo
        })
        .collect();
    let positive = osc.iter().all(|&o| o > 0.0);
    let fit = if positive && ks.len() >= 2 {
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64 * r.ln()).collect();
        let ys: Vec<f64> = osc.iter().map(|o| o.ln()).collect();
        fit_line(&xs, &ys)
    } else {
        None
    };
    Ok(OscillationReport {
        center_t: t0,
        center_x: x0,
        ratio: r,
        k: ks,
        osc,
        fitted_alpha: fit.map(|f| f.slope),
        r_squared: fit.map(|f| f.r_squared),
        verdict_allowed: fit.is_some_and(|f| f.r_squared >= MIN_R_SQUARED),
        k_max_reduced: deepest < k_max,
        used_extension: extension.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuhamelResult {
    pub field: RealField,
    pub sup_error: f64,
}

/// Nonlinear term `−s·Σ_j ∂_j G_R(θ)` in spectral form, with the solver's
/// dealiasing.
fn nonlinear_spectrum(field: &RealField, cfg: &SolverConfig) -> Spectrum {
    let grid = *field.grid();
    let s = cfg.nonlinearity_scale;
    if s == 0.0 {
        return Spectrum::zeros(grid);
    }
    let cutoff = crate::solver::Cutoff { r: cfg.r_cutoff.unwrap_or(f64::INFINITY), psi: cfg.psi };
    let mut th = transform(field);
    if cfg.dealias {
        th = th.dealias();
    }
    let mut g = transform(&th.inverse().map(|v| cutoff.flux(v)));
    if cfg.dealias {
        g = g.dealias();
    }
    let mut total = Spectrum::zeros(grid);
    for ax in 0..grid.dim() {
        let d = g.derivative(ax).expect("axis within grid");
        total.add_scaled(&d, -s);
    }
    total
}

/// `θ(t) ≈ S(t)θ₀ + ∫₀ᵗ S(t−s) N(θ(s)) ds` with the linear semigroup
/// `S(τ) = e^{−τ(|k|^{2α}+ε|k|²)}` (the Poisson semigroup at `α = 1/2`,
/// `ε = 0`) and the trapezoid rule on `quad_steps` equal panels, whose nodes
/// must be snapshot times.
pub fn duhamel_reconstruct(traj: &Trajectory, t: f64, quad_steps: usize) -> Result<DuhamelResult> {
    let cfg = &traj.config;
    let target = traj.snapshot_index(t).ok_or(RegularityError::OffLadder(t))?;
    let stored = &traj.snapshots[target].field;
    if t == 0.0 {
        let sup_error = traj.initial.zip_map(stored, |a, b| a - b)?.linf();
        return Ok(DuhamelResult { field: traj.initial.clone(), sup_error });
    }
    let p = 2.0 * cfg.alpha;
    let symbol = |k: f64| if k == 0.0 { 0.0 } else { k.powf(p) } + cfg.epsilon * k * k;
    let mut acc = transform(&traj.initial).apply_radial(|k| (-t * symbol(k)).exp());
    if quad_steps < 2 {
        return Err(RegularityError::InvalidParameter("quad_steps must be >= 2".into()));
    }
    let h = t / quad_steps as f64;
    let nodes: Vec<usize> = (0..=quad_steps)
        .map(|i| {
            let s = i as f64 * h;
            traj.snapshot_index(s).ok_or(RegularityError::OffLadder(s))
        })
        .collect::<Result<_>>()?;
    let terms: Vec<Spectrum> = nodes
        .par_iter()
        .enumerate()
        .map(|(i, &idx)| {
            let snap = &traj.snapshots[idx];
            let w = if i == 0 || i == quad_steps { 0.5 * h } else { h };
            let lag = t - snap.t;
            let n = nonlinear_spectrum(&snap.field, cfg);
            n.apply_radial(|k| w * (-lag * symbol(k)).exp())
        })
        .collect();
    for term in &terms {
        acc.add_scaled(term, 1.0);
    }
    let field = acc.inverse();
    let sup_error = field.zip_map(stored, |a, b| a - b)?.linf();
    Ok(DuhamelResult { field, sup_error })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fields::Grid;
    use crate::solver::run;

    #[test]
    fn zero_data_has_zero_ratios() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let traj = run(&RealField::zeros(g), &SolverConfig::critical(0.01, 0.5)).unwrap();
        let rep = decay_report(&traj, (0.1, 0.5)).unwrap();
        assert!(rep.ratios.iter().all(|&r| r == 0.0));
        assert!(decay_report(&traj, (0.1, 2.0)).is_err());
    }

    #[test]
    fn constant_field_has_no_alpha() {
        let g = Grid::new(1, 256, 2.0 * PI).unwrap();
        let traj = run(&RealField::constant(g, 1.0), &SolverConfig::critical(0.01, 1.0)).unwrap();
        let rep = oscillation_profile(&traj, (1.0, [PI, 0.0]), 0.5, 4, None).unwrap();
        assert!(rep.osc.iter().all(|&o| o == 0.0));
        assert!(rep.fitted_alpha.is_none() && !rep.verdict_allowed);
    }

    #[test]
    fn deep_levels_are_dropped() {
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let f = RealField::from_fn(g, |x| x[0].sin());
        let traj = run(&f, &SolverConfig::critical(0.01, 1.0)).unwrap();
        let rep = oscillation_profile(&traj, (1.0, [1.0, 0.0]), 0.5, 12, None).unwrap();
        assert!(rep.k_max_reduced);
        assert!(rep.k.len() < 12);
    }

    #[test]
    fn duhamel_at_zero_and_linear() {
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let f = RealField::from_fn(g, |x| (x[0]).sin() + 0.3 * (2.0 * x[0]).cos());
        let mut cfg = SolverConfig::critical(0.01, 0.4);
        let traj = run(&f, &cfg).unwrap();
        let r0 = duhamel_reconstruct(&traj, 0.0, 4).unwrap();
        assert_eq!(r0.sup_error, 0.0);
        assert!(matches!(duhamel_reconstruct(&traj, 0.123, 4), Err(RegularityError::OffLadder(_))));
        cfg.nonlinearity_scale = 0.0;
        let lin = run(&f, &cfg).unwrap();
        let r = duhamel_reconstruct(&lin, 0.4, 4).unwrap();
        assert!(r.sup_error < 1e-12, "{}", r.sup_error);
    }
}
