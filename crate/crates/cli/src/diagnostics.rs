//! Diagnostics that can be requested in a config or run later with
//! `diagnose`. Each one turns a trajectory into [`DiagnosticReport`]s.

use std::f64::consts::PI;

use fracburgers::degiorgi::{
    degiorgi_constants, estimate_sobolev_constant, fit_recurrence, isoperimetric_ratio,
    local_energy_residual, localized_energies, phi_from_bound, truncation_energies,
    vanishing_check, verify_constants, AffineRescale, BoxField, ConstantsInputs, DeGiorgiError,
    ExtensionCutoff, LEIReport, LocalizedConfig, Plateau, Sign, TruncationConfig,
};
use fracburgers::fields::{random_band_limited, transform, RealField, SplitMix64};
use fracburgers::fracops::{
    cordoba_gap, harmonic_extension, poisson_semigroup, sqrt_laplacian, ConvexTestFunction,
    FracError,
};
use fracburgers::regularity::{
    decay_report, default_decay_window, duhamel_reconstruct, oscillation_profile, ExtensionLevels,
    RegularityError,
};
use fracburgers::report::DiagnosticReport;
use fracburgers::solver::{run, scaling_check, SolverError, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierSpec, BarrierSpecError};
use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticError {
    #[error("{kind}: {message}")]
    Invalid { kind: &'static str, message: String },
    #[error("{0}")]
    Numerical(String),
}

type Result<T> = std::result::Result<T, DiagnosticError>;

fn invalid<T>(kind: &'static str, message: impl Into<String>) -> Result<T> {
    Err(DiagnosticError::Invalid { kind, message: message.into() })
}

macro_rules! lift {
    ($($t:ty),*) => {$(
        impl From<$t> for DiagnosticError {
            fn from(e: $t) -> Self {
                DiagnosticError::Invalid { kind: "diagnostic", message: e.to_string() }
            }
        }
    )*};
}
lift!(RegularityError, FracError, fracburgers::fields::FieldError);

impl From<SolverError> for DiagnosticError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BlowUp { .. } => DiagnosticError::Numerical(e.to_string()),
            other => DiagnosticError::Invalid { kind: "solver", message: other.to_string() },
        }
    }
}

impl From<DeGiorgiError> for DiagnosticError {
    fn from(e: DeGiorgiError) -> Self {
        match e {
            DeGiorgiError::NoAdmissible(_) => DiagnosticError::Numerical(e.to_string()),
            other => DiagnosticError::Invalid { kind: "degiorgi", message: other.to_string() },
        }
    }
}

impl From<BarrierSpecError> for DiagnosticError {
    fn from(e: BarrierSpecError) -> Self {
        match e {
            BarrierSpecError::Numerical(m) => DiagnosticError::Numerical(m),
            other => DiagnosticError::Invalid { kind: "barrier", message: other.to_string() },
        }
    }
}

/// Convex function for the Córdoba–Córdoba check.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiSpec {
    #[default]
    Square,
    /// Smoothed `(x − shift)₊`, width four grid spacings.
    PositivePart { shift: f64 },
}

mod defaults {
    pub fn tol_mean() -> f64 {
        1e-10
    }
    pub fn tol_l2() -> f64 {
        1e-10
    }
    pub fn tol_linf() -> f64 {
        1e-8
    }
    pub fn two() -> f64 {
        2.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn half() -> f64 {
        0.5
    }
    pub fn k25() -> usize {
        25
    }
    pub fn k8() -> usize {
        8
    }
    pub fn k6() -> usize {
        6
    }
    pub fn tol_energy() -> f64 {
        1e-12
    }
    pub fn z_step_localized() -> f64 {
        0.01
    }
    pub fn samples20() -> usize {
        20
    }
    pub fn samples10() -> usize {
        10
    }
    pub fn samples50() -> usize {
        50
    }
    pub fn samples100() -> usize {
        100
    }
    pub fn z_step_lei() -> f64 {
        0.04
    }
    pub fn z_max() -> f64 {
        4.0
    }
    pub fn tol_lei() -> f64 {
        1e-6
    }
    pub fn tol_cordoba() -> f64 {
        1e-8
    }
    pub fn dz() -> f64 {
        1e-2
    }
    pub fn r_fractions() -> Vec<f64> {
        vec![0.1, 0.3, 0.5, 0.8, 1.2]
    }
    pub fn shift_fractions() -> Vec<f64> {
        vec![-0.8, -0.4, 0.0, 0.4, 0.8]
    }
    pub fn nodes() -> usize {
        64
    }
    pub fn k_verify() -> usize {
        64
    }
}

/// Requested diagnostic with its parameters. Unlisted parameters take the
/// defaults shown in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Diagnostic {
    /// Mean drift, per-step `L²` and `L∞` growth.
    Conservation {
        #[serde(default = "defaults::tol_mean")]
        mean_tolerance: f64,
        #[serde(default = "defaults::tol_l2")]
        l2_tolerance: f64,
        #[serde(default = "defaults::tol_linf")]
        linf_tolerance: f64,
    },
    /// Re-solve on the `λ`-rescaled torus and compare.
    Scaling {
        #[serde(default = "defaults::two")]
        lambda: f64,
    },
    /// `sup t^{N/2}‖θ(t)‖∞/‖θ₀‖₂` over a window.
    Decay {
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    /// `U_k` with `C_k = M(1 − 2^{−k})`; `M` defaults to `t0^{−N/2}`.
    Truncation {
        #[serde(default)]
        m: Option<f64>,
        #[serde(default = "defaults::one")]
        t0: f64,
        #[serde(default = "defaults::k25")]
        k_max: usize,
        #[serde(default)]
        sign: Sign,
        #[serde(default = "defaults::tol_energy")]
        final_tolerance: f64,
    },
    /// `A_k` for `u = β(θ − L)`.
    Localized {
        lambda: f64,
        delta: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "defaults::k8")]
        k_max: usize,
        #[serde(default = "defaults::z_step_localized")]
        z_step: f64,
        #[serde(default = "defaults::one")]
        beta: f64,
        #[serde(default)]
        shift: f64,
    },
    /// Local energy inequality over random cutoffs, windows and rescalings
    /// with `|β| ≥ 1/C_θ` and `L ∈ [−1.5, 0.5]·C_θ`.
    LocalEnergy {
        #[serde(default = "defaults::samples20")]
        samples: usize,
        #[serde(default)]
        sobolev_constant: Option<f64>,
        #[serde(default = "defaults::z_step_lei")]
        z_step: f64,
        #[serde(default = "defaults::z_max")]
        z_max: f64,
        #[serde(default = "defaults::tol_lei")]
        tolerance: f64,
    },
    /// Oscillation over dyadic cylinders and the fitted Hölder exponent.
    Oscillation {
        #[serde(default)]
        t: Option<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "defaults::half")]
        ratio: f64,
        #[serde(default = "defaults::k6")]
        k_max: usize,
        #[serde(default)]
        z_step: Option<f64>,
        #[serde(default)]
        min_alpha: f64,
    },
    /// Mild-solution reconstruction; `refinements > 0` re-solves with `dt`
    /// halved that many times and checks first-order error decay.
    Duhamel {
        #[serde(default)]
        t: Option<f64>,
        #[serde(default)]
        quad_steps: Option<usize>,
        #[serde(default)]
        refinements: usize,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    /// `∫ψ_R(θ)∂_jθ(θ − L)₊` on dealiased fields; `R` and `L` are given as
    /// fractions of `‖θ‖∞`.
    Vanishing {
        #[serde(default = "defaults::r_fractions")]
        r_fractions: Vec<f64>,
        #[serde(default = "defaults::shift_fractions")]
        shift_fractions: Vec<f64>,
        #[serde(default = "defaults::samples10")]
        samples: usize,
        #[serde(default)]
        max_mode: Option<usize>,
        #[serde(default = "defaults::tol_cordoba")]
        tolerance: f64,
    },
    /// Pointwise `φ'(θ)Λθ − Λφ(θ) ≥ 0` on the initial field and random fields.
    Cordoba {
        #[serde(default = "defaults::samples100")]
        samples: usize,
        #[serde(default)]
        phi: PhiSpec,
        #[serde(default = "defaults::tol_cordoba")]
        tolerance: f64,
    },
    /// Operator identities on the initial field (plus `random_fields` extra
    /// normal-derivative checks).
    Operators {
        #[serde(default = "defaults::dz")]
        dz: f64,
        #[serde(default)]
        random_fields: usize,
    },
    /// Isoperimetric ratio on random smooth fields on `[−1, 1]^{N+1}` and on
    /// a refined ramp.
    Isoperimetric {
        #[serde(default = "defaults::samples50")]
        samples: usize,
        #[serde(default = "defaults::nodes")]
        nodes: usize,
    },
    Barrier { problem: BarrierSpec },
    /// `δ`, `M`, `ε₀` for this grid dimension; `Φ` defaults to the bound
    /// from `‖θ₀‖∞` and the estimated Sobolev constant.
    Constants {
        lambda: f64,
        c0: f64,
        #[serde(default)]
        phi: Option<f64>,
        #[serde(default = "defaults::k_verify")]
        k_verify: usize,
        #[serde(default)]
        sobolev_constant: Option<f64>,
    },
}

fn center_or_middle(c: &Option<Vec<f64>>, cfg: &ExperimentConfig) -> Result<[f64; 2]> {
    let dim = cfg.grid.dim();
    let mid = 0.5 * cfg.grid.length();
    match c {
        None => Ok([mid, if dim == 2 { mid } else { 0.0 }]),
        Some(v) if v.len() == dim => Ok([v[0], if dim == 2 { v[1] } else { 0.0 }]),
        Some(v) => invalid("center", format!("needs {dim} coordinates, got {}", v.len())),
    }
}

fn positive(kind: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(kind, format!("{name} must be > 0, got {v}"))
    }
}

impl Diagnostic {
    pub fn kind(&self) -> &'static str {
        match self {
            Diagnostic::Conservation { .. } => "conservation",
            Diagnostic::Scaling { .. } => "scaling",
            Diagnostic::Decay { .. } => "decay",
            Diagnostic::Truncation { .. } => "truncation",
            Diagnostic::Localized { .. } => "localized",
            Diagnostic::LocalEnergy { .. } => "local-energy",
            Diagnostic::Oscillation { .. } => "oscillation",
            Diagnostic::Duhamel { .. } => "duhamel",
            Diagnostic::Vanishing { .. } => "vanishing",
            Diagnostic::Cordoba { .. } => "cordoba",
            Diagnostic::Operators { .. } => "operators",
            Diagnostic::Isoperimetric { .. } => "isoperimetric",
            Diagnostic::Barrier { .. } => "barrier",
            Diagnostic::Constants { .. } => "constants",
        }
    }

    /// Checks that do not need the trajectory.
    pub fn validate(&self, cfg: &ExperimentConfig) -> Result<()> {
        let kind = self.kind();
        match self {
            Diagnostic::Scaling { lambda } => positive(kind, "lambda", *lambda)?,
            Diagnostic::Truncation { m, t0, k_max, .. } => {
                positive(kind, "t0", *t0)?;
                if let Some(m) = m {
                    positive(kind, "m", *m)?;
                }
                if *k_max == 0 {
                    return invalid(kind, "k_max must be >= 1");
                }
            }
            Diagnostic::Localized { center, z_step, beta, .. } => {
                center_or_middle(center, cfg)?;
                positive(kind, "z_step", *z_step)?;
                AffineRescale::new(*beta, 0.0).map_err(DiagnosticError::from)?;
            }
            Diagnostic::LocalEnergy { z_step, z_max, samples, .. } => {
                positive(kind, "z_step", *z_step)?;
                if *z_max < 3.5 {
                    return invalid(kind, "z_max must reach the cutoff height 3.5");
                }
                if *samples == 0 {
                    return invalid(kind, "samples must be >= 1");
                }
                if cfg.grid.length() < 16.0 {
                    return invalid(kind, "needs a torus of length >= 16");
                }
            }
            Diagnostic::Oscillation { center, ratio, .. } => {
                center_or_middle(center, cfg)?;
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return invalid(kind, "ratio must lie in (0, 1)");
                }
            }
            Diagnostic::Vanishing { r_fractions, shift_fractions, .. } => {
                if r_fractions.iter().any(|r| !(*r > 0.0)) {
                    return invalid(kind, "r_fractions must be positive");
                }
                if r_fractions.is_empty() || shift_fractions.is_empty() {
                    return invalid(kind, "need at least one R and one L");
                }
            }
            Diagnostic::Operators { dz, .. } => positive(kind, "dz", *dz)?,
            Diagnostic::Isoperimetric { nodes, .. } => {
                if *nodes < 3 {
                    return invalid(kind, "nodes must be >= 3");
                }
            }
            Diagnostic::Constants { lambda, c0, .. } => {
                if !(*lambda > 0.0 && *lambda < 0.5) {
                    return invalid(kind, "lambda must lie in (0, 1/2)");
                }
                if !(*c0 > 1.0) {
                    return invalid(kind, "c0 must be > 1");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Runs the diagnostic. Errors mean bad parameters for this trajectory.
    pub fn evaluate(&self, cfg: &ExperimentConfig, traj: &Trajectory) -> Result<Vec<DiagnosticReport>> {
        self.validate(cfg)?;
        let one = |r: DiagnosticReport| Ok(vec![r]);
        match self {
            Diagnostic::Conservation { mean_tolerance, l2_tolerance, linf_tolerance } => {
                one(conservation(traj, *mean_tolerance, *l2_tolerance, *linf_tolerance))
            }
            Diagnostic::Scaling { lambda } => one(scaling_check(traj, *lambda)?),
            Diagnostic::Decay { window } => {
                let w = window.map_or_else(|| default_decay_window(traj), |w| (w[0], w[1]));
                let d = decay_report(traj, w)?;
                let mut rep = DiagnosticReport::new("decay", 0.0)
                    .measure("sup_ratio", d.sup_ratio)
                    .measure("initial_l2", d.initial_l2)
                    .measure("window_lo", d.window.0)
                    .measure("window_hi", d.window.1)
                    .measure("linf_nonincreasing", f64::from(u8::from(d.linf_nonincreasing)))
                    .with_passed(d.sup_ratio.is_finite() && d.linf_nonincreasing);
                if !d.mean_zero {
                    rep = rep.note("initial data are not mean zero");
                }
                one(rep)
            }
            Diagnostic::Truncation { m, t0, k_max, sign, final_tolerance } => {
                let dim = traj.grid().dim() as f64;
                let m = m.unwrap_or_else(|| t0.powf(-dim / 2.0));
                let tc = TruncationConfig { m, t0: *t0, k_max: *k_max, sign: *sign };
                let seq = truncation_energies(traj, &tc)?;
                let fit = fit_recurrence(&seq);
                let monotone = seq.values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
                let last = *seq.values.last().expect("k_max >= 1");
                let target = 1.0 + 1.0 / dim - 0.1;
                let mut rep = DiagnosticReport::new("truncation_energies", *final_tolerance)
                    .measure("m", m)
                    .measure("u_first", seq.values[0])
                    .measure("u_last", last)
                    .measure("exponent", fit.exponent)
                    .measure("pairs_used", fit.pairs_used as f64)
                    .measure("min_constant", fit.min_constant);
                for (k, u) in seq.k.iter().zip(&seq.values) {
                    rep = rep.measure(format!("u_{k:02}"), *u);
                }
                if fit.vacuous {
                    rep = rep.note("energies vanish before a fit is possible; exponent check is vacuous");
                }
                let ok = monotone && last < *final_tolerance && (fit.vacuous || fit.exponent >= target);
                one(rep.with_passed(ok))
            }
            Diagnostic::Localized { lambda, delta, center, k_max, z_step, beta, shift } => {
                let lc = LocalizedConfig {
                    rescale: AffineRescale::new(*beta, *shift)?,
                    lambda: *lambda,
                    delta: *delta,
                    center: center_or_middle(center, cfg)?,
                    k_max: *k_max,
                    z_step: *z_step,
                };
                let seq = localized_energies(traj, &lc)?;
                let fit = fit_recurrence(&seq);
                let mut rep = DiagnosticReport::new("localized_energies", 0.0)
                    .measure("exponent", fit.exponent)
                    .measure("min_constant", fit.min_constant);
                for (k, a) in seq.k.iter().zip(&seq.values) {
                    rep = rep.measure(format!("a_{k:02}"), *a);
                }
                if seq.k_max_reduced {
                    rep = rep.note("deepest level reduced to keep four z points");
                }
                let ok = seq.values.iter().all(|a| a.is_finite() && *a >= 0.0);
                one(rep.with_passed(ok))
            }
            Diagnostic::LocalEnergy { samples, sobolev_constant, z_step, z_max, tolerance } => {
                one(local_energy(cfg, traj, *samples, *sobolev_constant, *z_step, *z_max, *tolerance)?)
            }
            Diagnostic::Oscillation { t, center, ratio, k_max, z_step, min_alpha } => {
                let t = t.unwrap_or_else(|| traj.t_final());
                let x0 = center_or_middle(center, cfg)?;
                let ext = z_step.map(|z_step| ExtensionLevels { z_step });
                let o = oscillation_profile(traj, (t, x0), *ratio, *k_max, ext)?;
                let alpha = o.fitted_alpha.unwrap_or(f64::NAN);
                let mut rep = DiagnosticReport::new("oscillation", *min_alpha)
                    .measure("fitted_alpha", alpha)
                    .measure("r_squared", o.r_squared.unwrap_or(f64::NAN))
                    .measure("levels", o.k.len() as f64);
                for (k, v) in o.k.iter().zip(&o.osc) {
                    rep = rep.measure(format!("osc_{k:02}"), *v);
                }
                if !o.verdict_allowed {
                    rep = rep.note("fit quality too low for a verdict");
                }
                if o.k_max_reduced {
                    rep = rep.note("deepest level reduced to what the grid and snapshots resolve");
                }
                one(rep.with_passed(o.verdict_allowed && alpha >= *min_alpha))
            }
            Diagnostic::Duhamel { t, quad_steps, refinements, tolerance } => {
                one(duhamel(traj, *t, *quad_steps, *refinements, *tolerance)?)
            }
            Diagnostic::Vanishing { r_fractions, shift_fractions, samples, max_mode, tolerance } => {
                one(vanishing(cfg, traj, r_fractions, shift_fractions, *samples, *max_mode, *tolerance))
            }
            Diagnostic::Cordoba { samples, phi, tolerance } => {
                one(cordoba(cfg, traj, *samples, *phi, *tolerance)?)
            }
            Diagnostic::Operators { dz, random_fields } => operators(cfg, traj, *dz, *random_fields),
            Diagnostic::Isoperimetric { samples, nodes } => isoperimetric(cfg, *samples, *nodes),
            Diagnostic::Barrier { problem } => one(problem.evaluate()?),
            Diagnostic::Constants { lambda, c0, phi, k_verify, sobolev_constant } => {
                let grid = *traj.grid();
                let cn = sobolev_constant.unwrap_or_else(|| estimate_sobolev_constant(grid, 100, cfg.seed));
                let phi = phi.unwrap_or_else(|| phi_from_bound(grid.dim(), cn, traj.initial.linf().max(1.0)));
                let mut inputs = ConstantsInputs::new(*lambda, grid.dim(), *c0, phi);
                inputs.k_verify = *k_verify;
                inputs.sobolev_constant = cn;
                let c = degiorgi_constants(&inputs)?;
                one(verify_constants(&c).measure("phi", phi).measure("eps0_bound", c.eps0_bound))
            }
        }
    }
}

fn conservation(traj: &Trajectory, tol_mean: f64, tol_l2: f64, tol_linf: f64) -> DiagnosticReport {
    let s = &traj.series;
    let (m0, l0, i0) = (s[0].mean, s[0].l2, s[0].linf);
    let drift = s.iter().map(|r| (r.mean - m0).abs()).fold(0.0, f64::max);
    let rel = |v: f64, scale: f64| if scale > 0.0 { v / scale } else { v };
    let l2_up = s.windows(2).map(|w| w[1].l2 - w[0].l2).fold(0.0, f64::max);
    let linf_up = s.windows(2).map(|w| w[1].linf - w[0].linf).fold(0.0, f64::max);
    let (l2_up, linf_up) = (rel(l2_up, l0), rel(linf_up, i0));
    DiagnosticReport::new("conservation", tol_l2)
        .measure("mean_drift", drift)
        .measure("max_relative_l2_increase", l2_up)
        .measure("max_relative_linf_increase", linf_up)
        .measure("final_l2_ratio", rel(s[s.len() - 1].l2, l0))
        .with_passed(drift <= tol_mean && l2_up <= tol_l2 && linf_up <= tol_linf)
}

fn local_energy(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    samples: usize,
    sobolev_constant: Option<f64>,
    z_step: f64,
    z_max: f64,
    tol: f64,
) -> Result<DiagnosticReport> {
    let grid = *traj.grid();
    if traj.snapshots.len() < 2 {
        return invalid("local-energy", "needs at least two snapshots");
    }
    let levels = (z_max / z_step).ceil() as usize;
    let zs: Vec<f64> = (0..=levels).map(|i| i as f64 * z_step).collect();
    let cn = sobolev_constant.unwrap_or_else(|| estimate_sobolev_constant(grid, 100, cfg.seed));
    let c_theta = traj.series.iter().map(|r| r.linf).fold(0.0, f64::max);
    if c_theta == 0.0 {
        return invalid("local-energy", "zero solution");
    }
    let mut rng = SplitMix64::new(cfg.seed ^ 0x1e1);
    let last = traj.snapshots.len() - 1;
    let pick = |rng: &mut SplitMix64, lo: usize, hi: usize| lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize;
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sign = if rng.next_f64() < 0.3 { -1.0 } else { 1.0 };
        let beta = sign * rng.uniform(1.0, 4.0) / c_theta;
        let shift = rng.uniform(-1.5, 0.5) * c_theta;
        let inner = rng.uniform(0.5, 2.0);
        let len = grid.length();
        let eta = ExtensionCutoff {
            center: [rng.uniform(0.0, len), if grid.dim() == 2 { rng.uniform(0.0, len) } else { 0.0 }],
            x: Plateau { inner, outer: inner + rng.uniform(0.7, 2.0) },
            z: Plateau { inner: rng.uniform(0.3, 1.5), outer: 3.5 },
        };
        let i0 = pick(&mut rng, 0, last - 1);
        let i1 = pick(&mut rng, i0 + 1, last);
        let window = (traj.snapshots[i0].t, traj.snapshots[i1].t);
        draws.push((AffineRescale::new(beta, shift)?, eta, window));
    }
    let reports: Vec<LEIReport> = draws
        .par_iter()
        .map(|(r, eta, w)| local_energy_residual(traj, r, eta, *w, &zs, cn))
        .collect::<std::result::Result<_, _>>()?;
    let worst = reports
        .iter()
        .map(|r| {
            let scale = r.lhs.max(r.rhs);
            if scale > 0.0 {
                r.residual / scale
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min);
    let nontrivial = reports.iter().filter(|r| r.lhs > 0.0).count();
    let passed = reports.iter().all(|r| r.passes(tol));
    Ok(DiagnosticReport::new("local_energy_inequality", tol)
        .measure("worst_relative_residual", worst)
        .measure("samples", reports.len() as f64)
        .measure("nontrivial_samples", nontrivial as f64)
        .measure("sobolev_constant", cn)
        .measure("c_theta", c_theta)
        .with_passed(passed))
}

fn duhamel(
    traj: &Trajectory,
    t: Option<f64>,
    quad_steps: Option<usize>,
    refinements: usize,
    tolerance: Option<f64>,
) -> Result<DiagnosticReport> {
    let t = t.unwrap_or_else(|| traj.t_final());
    let stride_dt = traj.config.dt * traj.config.snapshot_every as f64;
    let q = quad_steps.unwrap_or_else(|| (t / stride_dt).round().max(1.0) as usize);
    let base = duhamel_reconstruct(traj, t, q)?.sup_error;
    let mut rep = DiagnosticReport::new("duhamel", tolerance.unwrap_or(0.0))
        .measure("t", t)
        .measure("quad_steps", q as f64)
        .measure("sup_error", base);
    if refinements > 0 {
        const BAND: (f64, f64) = (1.7, 2.3);
        let mut errs = vec![base];
        let mut cfg = traj.config.clone();
        cfg.t_end = t;
        for j in 1..=refinements {
            cfg.dt = traj.config.dt / 2f64.powi(j as i32);
            let fine = run(&traj.initial, &cfg)?;
            errs.push(duhamel_reconstruct(&fine, t, q << j)?.sup_error);
            rep = rep.measure(format!("sup_error_{j}"), errs[j]);
        }
        let mut ok = true;
        for (j, w) in errs.windows(2).enumerate() {
            let ratio = w[0] / w[1];
            ok &= ratio > BAND.0 && ratio < BAND.1;
            rep = rep.measure(format!("ratio_{}", j + 1), ratio);
        }
        rep.tolerance = BAND.0;
        return Ok(rep.note("passes when each halving ratio lies in (1.7, 2.3)").with_passed(ok));
    }
    let linear = traj.config.nonlinearity_scale == 0.0;
    match tolerance.or(linear.then_some(1e-12)) {
        Some(tol) => {
            rep.tolerance = tol;
            Ok(rep.with_passed(base <= tol * traj.initial.linf().max(1.0)))
        }
        None => Ok(rep.note("no tolerance for a nonlinear run; error reported only").with_passed(base.is_finite())),
    }
}

fn dealiased(f: &RealField) -> RealField {
    transform(f).dealias().inverse()
}

fn vanishing(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    r_fractions: &[f64],
    shift_fractions: &[f64],
    samples: usize,
    max_mode: Option<usize>,
    tol: f64,
) -> DiagnosticReport {
    let grid = *traj.grid();
    let band = max_mode.unwrap_or(40).min(grid.n() / 3);
    let mut fields = vec![dealiased(&traj.initial), dealiased(&traj.snapshots.last().expect("nonempty").field)];
    for i in 0..samples {
        let f = random_band_limited(grid, band, 0.5, 1.0, cfg.seed.wrapping_add(1000 + i as u64));
        fields.push(dealiased(&f));
    }
    let worst = fields
        .par_iter()
        .map(|f| {
            let s = f.linf();
            if s == 0.0 {
                return 0.0;
            }
            let scale = s.powi(3) * grid.volume();
            let mut w: f64 = 0.0;
            for &rf in r_fractions {
                for &lf in shift_fractions {
                    w = w.max(vanishing_check(f, rf * s, lf * s) / scale);
                }
            }
            w
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    DiagnosticReport::new("vanishing", tol)
        .measure("worst_normalized_integral", worst)
        .measure("fields", fields.len() as f64)
        .measure("pairs_per_field", (r_fractions.len() * shift_fractions.len()) as f64)
        .with_passed(worst <= tol)
}

fn cordoba(cfg: &ExperimentConfig, traj: &Trajectory, samples: usize, phi: PhiSpec, tol: f64) -> Result<DiagnosticReport> {
    let grid = *traj.grid();
    let mut fields = vec![traj.initial.clone()];
    for i in 0..samples {
        let seed = cfg.seed.wrapping_add(i as u64);
        fields.push(random_band_limited(grid, 1 + i % 10, 0.5, 1.0 + (i % 3) as f64, seed));
    }
    let gaps: Vec<f64> = fields
        .par_iter()
        .map(|f| -> Result<f64> {
            let s = f.linf();
            if s == 0.0 {
                return Ok(0.0);
            }
            let (func, norm) = match phi {
                PhiSpec::Square => (ConvexTestFunction::Square, s * s),
                PhiSpec::PositivePart { shift } => (ConvexTestFunction::smoothed_positive_part(shift, &grid), s),
            };
            Ok(cordoba_gap(f, &func)?.min() / norm)
        })
        .collect::<Result<_>>()?;
    let worst = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DiagnosticReport::new("cordoba", tol)
        .measure("worst_normalized_gap", worst)
        .measure("fields", fields.len() as f64)
        .with_passed(worst >= -tol))
}

/// First-order normal-derivative errors at `dz, dz/2, dz/4` and their ratios.
fn normal_derivative_ratios(f: &RealField, dz: f64) -> Result<[f64; 2]> {
    let lam = sqrt_laplacian(f);
    let mut errs = [0.0; 3];
    for (j, e) in errs.iter_mut().enumerate() {
        let h = dz / 2f64.powi(j as i32);
        let p = poisson_semigroup(f, h)?;
        let fd = f.zip_map(&p, |a, b| (a - b) / h)?;
        *e = fd.zip_map(&lam, |a, b| a - b)?.linf();
    }
    Ok([errs[0] / errs[1], errs[1] / errs[2]])
}

fn operators(cfg: &ExperimentConfig, traj: &Trajectory, dz: f64, random_fields: usize) -> Result<Vec<DiagnosticReport>> {
    let f = &traj.initial;
    let grid = *f.grid();
    let scale = f.linf().max(f64::MIN_POSITIVE);
    let mut out = Vec::new();

    if let Some(exact) = cfg.initial.exact_sqrt_laplacian(grid) {
        let err = sqrt_laplacian(f).zip_map(&exact, |a, b| a - b)?.linf();
        out.push(
            DiagnosticReport::new("sqrt_laplacian_exactness", 1e-10)
                .measure("sup_error", err)
                .with_passed(err < 1e-10 * scale.max(1.0)),
        );
    }

    let (z1, z2) = (0.3, 0.45);
    let composed = poisson_semigroup(&poisson_semigroup(f, z1)?, z2)?;
    let direct = poisson_semigroup(f, z1 + z2)?;
    let comp = composed.zip_map(&direct, |a, b| a - b)?.linf();
    out.push(
        DiagnosticReport::new("semigroup_composition", 1e-12)
            .measure("sup_error", comp)
            .with_passed(comp < 1e-12 * scale.max(1.0)),
    );

    // Fourth-order stencil in z; second order would need dz well below 1e-2
    // for mode 3 already.
    let zs: Vec<f64> = (0..=20).map(|i| i as f64 * dz).collect();
    let ext = harmonic_extension(f, &zs)?;
    let trace = ext.slice(0).zip_map(f, |a, b| a - b)?.linf();
    let mut harm: f64 = 0.0;
    for i in 2..zs.len() - 2 {
        let mid = ext.slice(i);
        let spec = transform(mid);
        let mut lap = spec.derivative(0)?.derivative(0)?;
        if grid.dim() == 2 {
            lap.add_scaled(&spec.derivative(1)?.derivative(1)?, 1.0);
        }
        let lap = lap.inverse();
        let s: Vec<&[f64]> = (i - 2..=i + 2).map(|k| ext.slice(k).values()).collect();
        for j in 0..mid.values().len() {
            let d2z = (-s[0][j] + 16.0 * s[1][j] - 30.0 * s[2][j] + 16.0 * s[3][j] - s[4][j])
                / (12.0 * dz * dz);
            harm = harm.max((d2z + lap.values()[j]).abs());
        }
    }
    let harm = harm / scale;
    out.push(
        DiagnosticReport::new("harmonic_extension", 1e-4)
            .measure("trace_error", trace)
            .measure("relative_harmonicity_residual", harm)
            .measure("dz", dz)
            .with_passed(trace / scale < 1e-4 && harm < 1e-4),
    );

    const BAND: (f64, f64) = (1.8, 2.2);
    let mut fields = vec![f.clone()];
    for i in 0..random_fields {
        fields.push(random_band_limited(grid, 8, 1.0, 1.0, cfg.seed.wrapping_add(100 + i as u64)));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for g in &fields {
        if g.linf() == 0.0 || transform(g).hhalf_squared() == 0.0 {
            continue;
        }
        for r in normal_derivative_ratios(g, dz)? {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    out.push(
        DiagnosticReport::new("normal_derivative_order", BAND.0)
            .measure("min_halving_ratio", lo)
            .measure("max_halving_ratio", hi)
            .measure("fields", fields.len() as f64)
            .note("passes when every halving ratio lies in (1.8, 2.2)")
            .with_passed(lo > BAND.0 && hi < BAND.1),
    );
    Ok(out)
}

fn isoperimetric(cfg: &ExperimentConfig, samples: usize, nodes: usize) -> Result<Vec<DiagnosticReport>> {
    let dim = cfg.grid.dim() + 1;
    let mut rng = SplitMix64::new(cfg.seed ^ 0x150);
    let mut worst: f64 = 0.0;
    let mut finite = true;
    for _ in 0..samples {
        let a: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let (phase, amp) = (rng.uniform(0.0, 2.0 * PI), rng.uniform(0.5, 3.0));
        let w = BoxField::from_fn(dim, nodes, |p| {
            let arg: f64 = a.iter().zip(p).map(|(ai, pi)| ai * pi).sum();
            0.5 + amp * (arg + phase).sin()
        })?;
        let r = isoperimetric_ratio(&w).get("ratio").expect("ratio measured");
        finite &= r.is_finite();
        if r.is_finite() {
            worst = worst.max(r);
        }
    }
    let random = DiagnosticReport::new("isoperimetric_random", 0.0)
        .measure("max_ratio", worst)
        .measure("samples", samples as f64)
        .measure("box_dim", dim as f64)
        .with_passed(finite);

    let ladder = [64, 128, 256, 512];
    let ratios: Vec<f64> = ladder
        .iter()
        .map(|&n| -> Result<f64> {
            let w = BoxField::from_fn(1, n, |p| (p[0] + 1.0) / 2.0)?;
            Ok(isoperimetric_ratio(&w).get("ratio").expect("ratio measured"))
        })
        .collect::<Result<_>>()?;
    let diffs: Vec<f64> = ratios.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let converging = ratios.iter().all(|r| r.is_finite()) && diffs.windows(2).all(|d| d[1] <= d[0]);
    let mut ramp = DiagnosticReport::new("isoperimetric_ramp", 0.0);
    for (n, r) in ladder.iter().zip(&ratios) {
        ramp = ramp.measure(format!("ratio_{n:03}"), *r);
    }
    Ok(vec![random, ramp.with_passed(converging)])
}

/// Evaluates a diagnostic, turning parameter errors into a failed report so
/// a batch run keeps its artifacts.
pub fn evaluate_or_fail(d: &Diagnostic, cfg: &ExperimentConfig, traj: &Trajectory) -> Vec<DiagnosticReport> {
    match d.evaluate(cfg, traj) {
        Ok(r) => r,
        Err(e) => vec![DiagnosticReport::new(d.kind(), 0.0).note(format!("error: {e}")).with_passed(false)],
    }
}
