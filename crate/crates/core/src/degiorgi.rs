//! De Giorgi measurements: truncations, energy sequences and their recurrence
//! fit, the local energy inequality, the vanishing identity, the isoperimetric
//! ratio, and the admissible constants `δ`, `M`, `ε₀`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fields::{random_band_limited, transform, FieldError, Grid, RealField, Spectrum};
use crate::fracops::{self, FracError};
use crate::numerics::{bisect, fit_two, gauss_legendre, trapezoid};
use crate::report::DiagnosticReport;
use crate::solver::{psi_r, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeGiorgiError {
    #[error("need at least {needed} snapshots in [{from}, {to}], found {found}")]
    InsufficientSnapshots { needed: usize, found: usize, from: f64, to: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cutoff support violation: {0}")]
    SupportViolation(String),
    #[error("window outside trajectory: {0}")]
    Window(String),
    #[error("no admissible {0} within search bounds")]
    NoAdmissible(&'static str),
    #[error(transparent)]
    Frac(#[from] FracError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

type Result<T> = std::result::Result<T, DeGiorgiError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DeGiorgiError::InvalidParameter(msg.into()))
}

/// Pointwise `(field − level)₊`.
pub fn truncate(field: &RealField, level: f64) -> RealField {
    field.map(|v| (v - level).max(0.0))
}

/// `C^∞` step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Derivative of [`smooth_step`]; its maximum is 2 at `t = 1/2`.
pub fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b))
    }
}

/// One-dimensional plateau: 1 on `|d| ≤ inner`, 0 on `|d| ≥ outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub inner: f64,
    pub outer: f64,
}

impl Plateau {
    pub fn value(&self, d: f64) -> f64 {
        smooth_step((self.outer - d.abs()) / (self.outer - self.inner))
    }

    pub fn derivative(&self, d: f64) -> f64 {
        let w = self.outer - self.inner;
        -d.signum() * smooth_step_derivative((self.outer - d.abs()) / w) / w
    }
}

/// Signed periodic offset `x − c` wrapped into `[−length/2, length/2)`.
fn wrap(x: f64, c: f64, length: f64) -> f64 {
    (x - c + 0.5 * length).rem_euclid(length) - 0.5 * length
}

/// Which side of the field the truncations act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    #[default]
    Positive,
    Negative,
}

impl Sign {
    fn apply(self, v: f64) -> f64 {
        match self {
            Sign::Positive => v,
            Sign::Negative => -v,
        }
    }
}

/// Levels `C_k = M(1 − 2^{−k})` at times `T_k = t0(1 − 2^{−k})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub m: f64,
    pub t0: f64,
    pub k_max: usize,
    #[serde(default)]
    pub sign: Sign,
}

impl TruncationConfig {
    pub fn level(&self, k: usize) -> f64 {
        self.m * (1.0 - 0.5f64.powi(k as i32))
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 * (1.0 - 0.5f64.powi(k as i32))
    }

    fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return invalid(format!("M must be > 0, got {}", self.m));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return invalid(format!("t0 must be > 0, got {}", self.t0));
        }
        if self.k_max == 0 {
            return invalid("k_max must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    /// `U_k`: global energies of `(θ − C_k)₊`.
    Global,
    /// `A_k`: cutoff-localized energies of the rescaled extension.
    Localized,
}

/// Energies indexed by level `k`, with their levels and start times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySequence {
    pub kind: EnergyKind,
    pub dim: usize,
    pub k: Vec<usize>,
    pub levels: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Index offset of the recurrence (`U_k` against `U_{k−lag}`).
    pub lag: usize,
    /// Set when the deepest requested level could not be resolved.
    pub k_max_reduced: bool,
}

impl EnergySequence {
    /// Energy at level `k`, if measured.
    pub fn get(&self, k: usize) -> Option<f64> {
        self.k.iter().position(|&j| j == k).map(|i| self.values[i])
    }
}

/// `U_k` for `k = 0..=k_max`: the sup over snapshots in `[T_k, t_end]` of
/// `∫ θ_k²` plus twice the trapezoid time integral of `‖θ_k‖²_{Ḣ^{1/2}}`.
pub fn truncation_energies(traj: &Trajectory, config: &TruncationConfig) -> Result<EnergySequence> {
    config.validate()?;
    let t_end = traj.t_final();
    if t_end < config.t0 {
        return Err(DeGiorgiError::Window(format!(
            "trajectory ends at {t_end} before t0 = {}",
            config.t0
        )));
    }
    let deep = traj.window(config.time(config.k_max), t_end);
    if deep.len() < 3 {
        return Err(DeGiorgiError::InsufficientSnapshots {
            needed: 3,
            found: deep.len(),
            from: config.time(config.k_max),
            to: t_end,
        });
    }
    let ks: Vec<usize> = (0..=config.k_max).collect();
    let values = ks
        .par_iter()
        .map(|&k| {
            let level = config.level(k);
            let snaps = traj.window(config.time(k), t_end);
            let mut sup: f64 = 0.0;
            let mut ts = Vec::with_capacity(snaps.len());
            let mut diss = Vec::with_capacity(snaps.len());
            for s in snaps {
                let tk = s.field.map(|v| (config.sign.apply(v) - level).max(0.0));
                let spec = transform(&tk);
                sup = sup.max(tk.values().iter().map(|v| v * v).sum::<f64>() * tk.grid().cell_volume());
                ts.push(s.t);
                diss.push(spec.hhalf_squared());
            }
            sup + 2.0 * trapezoid(&ts, &diss)
        })
        .collect();
    Ok(EnergySequence {
        kind: EnergyKind::Global,
        dim: traj.grid().dim(),
        levels: ks.iter().map(|&k| config.level(k)).collect(),
        times: ks.iter().map(|&k| config.time(k)).collect(),
        k: ks,
        values,
        lag: 1,
        k_max_reduced: false,
    })
}

/// Least-squares fit of `ln E_k = k·ln C0 + exponent·ln E_{k−lag}` over the
/// leading run of positive energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceFit {
    pub c0: f64,
    pub exponent: f64,
    pub pairs_used: usize,
    /// Fewer than four positive levels: the sequence collapsed early.
    pub vacuous: bool,
    /// Smallest constant for which every measured pair obeys the recurrence
    /// inequality (`2^{k(1+2/N)} C E_{k−1}^{1+1/N}` for lag 1,
    /// `C^k E_{k−3}^{1+1/N}` for lag 3).
    pub min_constant: f64,
}

impl RecurrenceFit {
    pub fn inequality_holds(&self) -> bool {
        self.min_constant.is_finite()
    }
}

pub fn fit_recurrence(seq: &EnergySequence) -> RecurrenceFit {
    let lag = seq.lag.max(1);
    let p = 1.0 + 1.0 / seq.dim as f64;
    let run = seq.values.iter().take_while(|&&v| v > 0.0).count();
    let mut us = Vec::new();
    let mut vs = Vec::new();
    let mut ys = Vec::new();
    for i in lag..run {
        us.push(seq.k[i] as f64);
        vs.push(seq.values[i - lag].ln());
        ys.push(seq.values[i].ln());
    }
    let mut min_constant: f64 = 0.0;
    for i in lag..seq.values.len() {
        let (e, prev) = (seq.values[i], seq.values[i - lag]);
        if e <= 0.0 {
            continue;
        }
        if prev <= 0.0 {
            min_constant = f64::INFINITY;
            continue;
        }
        let k = seq.k[i] as f64;
        let c = if lag == 1 {
            (e.ln() - k * (1.0 + 2.0 / seq.dim as f64) * 2f64.ln() - p * prev.ln()).exp()
        } else {
            ((e.ln() - p * prev.ln()) / k).exp()
        };
        min_constant = min_constant.max(c);
    }
    let vacuous = run < 4 || us.len() < 2;
    let (c0, exponent) = if vacuous {
        (f64::NAN, f64::NAN)
    } else {
        fit_two(&us, &vs, &ys).map_or((f64::NAN, f64::NAN), |(a, e)| (a.exp(), e))
    };
    RecurrenceFit { c0, exponent, pairs_used: us.len(), vacuous, min_constant }
}

/// `u = β(θ − L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineRescale {
    pub beta: f64,
    pub shift: f64,
}

impl AffineRescale {
    pub fn new(beta: f64, shift: f64) -> Result<Self> {
        if !(beta.is_finite() && beta != 0.0 && shift.is_finite()) {
            return invalid(format!("need finite nonzero beta and finite L, got ({beta}, {shift})"));
        }
        Ok(Self { beta, shift })
    }

    pub fn forward(&self, theta: f64) -> f64 {
        self.beta * (theta - self.shift)
    }

    pub fn inverse(&self, u: f64) -> f64 {
        u / self.beta + self.shift
    }
}

/// Extension slice `P(z)θ` with its gradient in `(x, z)`.
struct ExtSlice {
    value: RealField,
    grad_x: Vec<RealField>,
    grad_z: RealField,
}

fn ext_slice(spec: &Spectrum, z: f64) -> ExtSlice {
    let pz = spec.apply_radial(|k| (-z * k).exp());
    let grad_x = (0..spec.grid().dim())
        .map(|ax| pz.derivative(ax).expect("axis within grid").inverse())
        .collect();
    let grad_z = pz.apply_radial(|k| -k).inverse();
    ExtSlice { value: pz.inverse(), grad_x, grad_z }
}

/// Smooth product cutoff `η(x, z) = Π_j a(x_j − c_j) · b(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionCutoff {
    pub center: [f64; 2],
    pub x: Plateau,
    pub z: Plateau,
}

impl ExtensionCutoff {
    fn check(&self, grid: &Grid) -> Result<()> {
        for p in [self.x, self.z] {
            if !(p.inner >= 0.0 && p.outer > p.inner) {
                return Err(DeGiorgiError::SupportViolation(format!(
                    "plateau needs 0 <= inner < outer, got {p:?}"
                )));
            }
        }
        if self.x.outer > 4.0 || self.z.outer > 4.0 {
            return Err(DeGiorgiError::SupportViolation(
                "cutoff must be supported in [-4,4]^N x [0,4]".into(),
            ));
        }
        if grid.length() < 16.0 {
            return Err(DeGiorgiError::SupportViolation(format!(
                "torus length {} < 16 lets the cutoff box wrap",
                grid.length()
            )));
        }
        Ok(())
    }

    /// Horizontal factor and its gradient at every grid point.
    fn horizontal(&self, grid: &Grid) -> (Vec<f64>, Vec<[f64; 2]>) {
        let dim = grid.dim();
        let mut val = Vec::with_capacity(grid.total_points());
        let mut grad = Vec::with_capacity(grid.total_points());
        for i in 0..grid.total_points() {
            let p = grid.point(i);
            let d: Vec<f64> = (0..dim).map(|j| wrap(p[j], self.center[j], grid.length())).collect();
            let a: Vec<f64> = d.iter().map(|&x| self.x.value(x)).collect();
            let da: Vec<f64> = d.iter().map(|&x| self.x.derivative(x)).collect();
            let v: f64 = a.iter().product();
            let mut g = [0.0; 2];
            for j in 0..dim {
                g[j] = da[j] * (0..dim).filter(|&l| l != j).map(|l| a[l]).product::<f64>();
            }
            val.push(v);
            grad.push(g);
        }
        (val, grad)
    }
}

/// Both sides of the local energy inequality on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LEIReport {
    pub rescale: AffineRescale,
    pub sigma: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub phi_used: f64,
    pub dissipation: f64,
    pub mass_t: f64,
    pub mass_sigma: f64,
    pub trace_term: f64,
    pub bulk_term: f64,
}

impl LEIReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.residual >= -rel_tol * self.lhs.max(self.rhs)
    }
}

/// Per-snapshot integrals of the local energy inequality.
struct LeiTerms {
    dissipation: f64,
    bulk: f64,
    trace: f64,
    mass: f64,
}

fn lei_terms(
    field: &RealField,
    rescale: &AffineRescale,
    eta: &ExtensionCutoff,
    horiz: &(Vec<f64>, Vec<[f64; 2]>),
    z_grid: &[f64],
) -> LeiTerms {
    let grid = *field.grid();
    let dim = grid.dim();
    let cell = grid.cell_volume();
    let spec = transform(field);
    let (hv, hg) = horiz;
    let per_level: Vec<(f64, f64, f64, f64)> = z_grid
        .par_iter()
        .map(|&z| {
            let sl = ext_slice(&spec, z);
            let (bz, dbz) = (eta.z.value(z), eta.z.derivative(z));
            let (mut diss, mut bulk, mut trace, mut mass) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..grid.total_points() {
                let u = rescale.forward(sl.value.values()[i]);
                if u <= 0.0 {
                    continue;
                }
                let e = hv[i] * bz;
                let mut g2 = 0.0;
                let mut ge2 = 0.0;
                for j in 0..dim {
                    let ge = hg[i][j] * bz;
                    let c = ge * u + e * rescale.beta * sl.grad_x[j].values()[i];
                    g2 += c * c;
                    ge2 += ge * ge;
                }
                let gez = hv[i] * dbz;
                let cz = gez * u + e * rescale.beta * sl.grad_z.values()[i];
                g2 += cz * cz;
                diss += g2;
                bulk += (ge2 + gez * gez) * u * u;
                if z == 0.0 {
                    let gx2: f64 = (0..dim).map(|j| hg[i][j].powi(2)).sum();
                    trace += gx2 * u * u;
                    mass += (hv[i] * u).powi(2);
                }
            }
            (diss * cell, bulk * cell, trace * cell, mass * cell)
        })
        .collect();
    let d: Vec<f64> = per_level.iter().map(|p| p.0).collect();
    let b: Vec<f64> = per_level.iter().map(|p| p.1).collect();
    LeiTerms {
        dissipation: trapezoid(z_grid, &d),
        bulk: trapezoid(z_grid, &b),
        trace: per_level[0].2,
        mass: per_level[0].3,
    }
}

/// Evaluates both sides of the local energy inequality for `u = β(θ − L)` on
/// the snapshot window `[σ, t]`, with
/// `Φ = 2N·C_N·(|L| + sup_{[σ,t]}‖θ‖∞)²`.
pub fn local_energy_residual(
    traj: &Trajectory,
    rescale: &AffineRescale,
    eta: &ExtensionCutoff,
    window: (f64, f64),
    z_grid: &[f64],
    sobolev_constant: f64,
) -> Result<LEIReport> {
    let grid = *traj.grid();
    eta.check(&grid)?;
    fracops::check_levels(z_grid)?;
    if *z_grid.last().expect("levels checked nonempty") < eta.z.outer {
        return Err(DeGiorgiError::SupportViolation(format!(
            "z grid stops below the cutoff height {}",
            eta.z.outer
        )));
    }
    if !(sobolev_constant > 0.0 && sobolev_constant.is_finite()) {
        return invalid("Sobolev constant must be positive");
    }
    let (sigma, t) = window;
    let (Some(i0), Some(i1)) = (traj.snapshot_index(sigma), traj.snapshot_index(t)) else {
        return Err(DeGiorgiError::Window(format!("({sigma}, {t}) are not snapshot times")));
    };
    if i1 <= i0 {
        return Err(DeGiorgiError::Window(format!("need sigma < t, got ({sigma}, {t})")));
    }
    let snaps = &traj.snapshots[i0..=i1];
    let tol = 1e-9 * t.max(traj.config.dt);
    let sup_theta = traj
        .series
        .iter()
        .filter(|r| r.t >= sigma - tol && r.t <= t + tol)
        .map(|r| r.linf)
        .chain(snaps.iter().map(|s| s.field.linf()))
        .fold(0.0, f64::max);
    let n_dim = grid.dim() as f64;
    let phi = 2.0 * n_dim * sobolev_constant * (rescale.shift.abs() + sup_theta).powi(2);
    let horiz = eta.horizontal(&grid);
    let terms: Vec<LeiTerms> =
        snaps.iter().map(|s| lei_terms(&s.field, rescale, eta, &horiz, z_grid)).collect();
    let ts: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let integrate = |f: fn(&LeiTerms) -> f64| {
        let ys: Vec<f64> = terms.iter().map(f).collect();
        trapezoid(&ts, &ys)
    };
    let dissipation = integrate(|x| x.dissipation);
    let trace_term = integrate(|x| x.trace);
    let bulk_term = integrate(|x| x.bulk);
    let mass_t = terms.last().expect("window has two snapshots").mass;
    let mass_sigma = terms[0].mass;
    let lhs = 0.5 * dissipation + 0.5 * mass_t;
    let rhs = 0.5 * mass_sigma + phi * trace_term + bulk_term;
    Ok(LEIReport {
        rescale: *rescale,
        sigma,
        t,
        lhs,
        rhs,
        residual: rhs - lhs,
        phi_used: phi,
        dissipation,
        mass_t,
        mass_sigma,
        trace_term,
        bulk_term,
    })
}

/// Largest Rayleigh quotient `‖f‖²_{L^q} / ‖f‖²_{Ḣ^{1/2}}` over random
/// mean-zero band-limited fields, with `q = ∞` in 1D and `q = 4` in 2D.
pub fn estimate_sobolev_constant(grid: Grid, samples: usize, seed: u64) -> f64 {
    let top = grid.n() / 3;
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let band = 1 + (i % top.max(1));
            let decay = [0.0, 0.5, 1.0, 2.0][i % 4];
            let f = random_band_limited(grid, band, decay, 1.0, seed.wrapping_add(i as u64));
            let h = transform(&f).hhalf_squared();
            let lq2 = if grid.dim() == 1 {
                f.linf().powi(2)
            } else {
                (f.values().iter().map(|v| v.powi(4)).sum::<f64>() * grid.cell_volume()).sqrt()
            };
            if h > 0.0 {
                lq2 / h
            } else {
                0.0
            }
        })
        .reduce(|| 0.0, f64::max)
}

/// Cube cutoffs `η_k` between `B(1 + 2^{−k−1/2})` and `B(1 + 2^{−k})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub center: [f64; 2],
}

impl CutoffFamily {
    pub fn plateau(k: usize) -> Plateau {
        Plateau { inner: 1.0 + 0.5f64.powf(k as f64 + 0.5), outer: 1.0 + 0.5f64.powi(k as i32) }
    }

    /// Gradient bound constant `C` in `|∇η_k| ≤ C 2^k`.
    pub fn gradient_constant(dim: usize) -> f64 {
        2.0 * (dim as f64).sqrt() / (1.0 - 0.5f64.sqrt())
    }

    /// Samples of `η_k` and `|∇η_k|` on the grid.
    pub fn sample(&self, grid: &Grid, k: usize) -> (RealField, RealField) {
        let cut = ExtensionCutoff {
            center: self.center,
            x: Self::plateau(k),
            z: Plateau { inner: 1.0, outer: 2.0 },
        };
        let (v, g) = cut.horizontal(grid);
        let gn = g.iter().map(|g| g[0].hypot(g[1])).collect();
        (
            RealField::new(*grid, v).expect("finite cutoff samples"),
            RealField::new(*grid, gn).expect("finite cutoff gradient"),
        )
    }

    /// Checks the sandwich and gradient bounds on the grid for level `k`.
    pub fn verify(&self, grid: &Grid, k: usize) -> bool {
        let p = Self::plateau(k);
        let (v, g) = self.sample(grid, k);
        let bound = Self::gradient_constant(grid.dim()) * 2f64.powi(k as i32);
        (0..grid.total_points()).all(|i| {
            let pt = grid.point(i);
            let d = (0..grid.dim())
                .map(|j| wrap(pt[j], self.center[j], grid.length()).abs())
                .fold(0.0, f64::max);
            let val = v.values()[i];
            let lower = if d <= p.inner { 1.0 } else { 0.0 };
            let upper = if d < p.outer { 1.0 } else { 0.0 };
            val >= lower - 1e-14 && val <= upper + 1e-14 && g.values()[i] <= bound * (1.0 + 1e-12)
        })
    }
}

/// Parameters of the localized energies `A_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedConfig {
    pub rescale: AffineRescale,
    pub lambda: f64,
    pub delta: f64,
    pub center: [f64; 2],
    pub k_max: usize,
    pub z_step: f64,
}

/// `A_k` for `k = 0..=k_max` with `C_k = 2 − λ(1 + 2^{−k})`, window
/// `[t_f − 1 − 2^{−k}, t_f]`, cutoff `η_k` and `z ∈ [0, δ^k]`. The deepest
/// level is lowered until `[0, δ^k]` holds at least four z points.
pub fn localized_energies(traj: &Trajectory, cfg: &LocalizedConfig) -> Result<EnergySequence> {
    let grid = *traj.grid();
    if !(cfg.lambda > 0.0 && cfg.lambda < 0.5) {
        return invalid("lambda must lie in (0, 1/2)");
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return invalid("delta must lie in (0, 1)");
    }
    if !(cfg.z_step > 0.0) {
        return invalid("z_step must be positive");
    }
    if grid.length() < 16.0 {
        return Err(DeGiorgiError::SupportViolation("torus length must be >= 16".into()));
    }
    let tf = traj.t_final();
    if tf < 2.0 {
        return Err(DeGiorgiError::Window(format!("need t_final >= 2, got {tf}")));
    }
    let mut k_max = cfg.k_max;
    while k_max > 0 && cfg.delta.powi(k_max as i32) / cfg.z_step < 3.0 {
        k_max -= 1;
    }
    let reduced = k_max < cfg.k_max;
    let ks: Vec<usize> = (0..=k_max).collect();
    let level = |k: usize| 2.0 - cfg.lambda * (1.0 + 0.5f64.powi(k as i32));
    let time = |k: usize| tf - (1.0 + 0.5f64.powi(k as i32));
    let values = ks
        .iter()
        .map(|&k| {
            let depth = cfg.delta.powi(k as i32);
            let steps = (depth / cfg.z_step).floor() as usize;
            let mut zs: Vec<f64> = (0..=steps).map(|j| j as f64 * cfg.z_step).collect();
            if depth - zs[zs.len() - 1] > 1e-12 * depth {
                zs.push(depth);
            }
            let shifted = AffineRescale {
                beta: cfg.rescale.beta,
                shift: cfg.rescale.shift + level(k) / cfg.rescale.beta,
            };
            let eta = ExtensionCutoff {
                center: cfg.center,
                x: CutoffFamily::plateau(k),
                // flat in z: the z-range itself is truncated at δ^k
                z: Plateau { inner: 4.0 * depth, outer: 8.0 * depth },
            };
            let horiz = eta.horizontal(&grid);
            let snaps = traj.window(time(k), tf);
            let mut sup: f64 = 0.0;
            let mut ts = Vec::new();
            let mut ds = Vec::new();
            for s in snaps {
                let terms = lei_terms(&s.field, &shifted, &eta, &horiz, &zs);
                sup = sup.max(terms.mass);
                ts.push(s.t);
                ds.push(terms.dissipation);
            }
            trapezoid(&ts, &ds) + sup
        })
        .collect();
    Ok(EnergySequence {
        kind: EnergyKind::Localized,
        dim: grid.dim(),
        levels: ks.iter().map(|&k| level(k)).collect(),
        times: ks.iter().map(|&k| time(k)).collect(),
        k: ks,
        values,
        lag: 3,
        k_max_reduced: reduced,
    })
}

/// Real trigonometric interpolant of one grid line.
struct TrigLine {
    k0: f64,
    coeffs: Vec<Complex64>,
    nyquist: f64,
}

impl TrigLine {
    fn new(samples: &[f64], length: f64) -> Self {
        let n = samples.len();
        let g = Grid::new(1, n, length).expect("line grid mirrors a valid grid");
        let spec = transform(&RealField::new(g, samples.to_vec()).expect("finite line"));
        let c = spec.coeffs();
        Self { k0: 2.0 * PI / length, coeffs: c[..n / 2].to_vec(), nyquist: c[n / 2].re }
    }

    /// Value and derivative at `s`.
    fn eval(&self, s: f64) -> (f64, f64) {
        let w = Complex64::from_polar(1.0, self.k0 * s);
        let mut e = Complex64::new(1.0, 0.0);
        let mut v = self.coeffs[0].re;
        let mut d = 0.0;
        for (m, c) in self.coeffs.iter().enumerate().skip(1) {
            e *= w;
            let t = c * e;
            v += 2.0 * t.re;
            d -= 2.0 * m as f64 * self.k0 * t.im;
        }
        let kn = self.k0 * self.coeffs.len() as f64;
        v += self.nyquist * (kn * s).cos();
        d -= self.nyquist * kn * (kn * s).sin();
        (v, d)
    }
}

/// `max_j |∫ ψ_R(θ) ∂_jθ (θ − L)₊|`, integrating the trigonometric interpolant
/// along every grid line with Gauss–Legendre on sub-cells split at the kinks
/// `θ ∈ {L, ±R}`. Returns exactly 0 when `L` is at or above every sample.
pub fn vanishing_check(field: &RealField, r: f64, shift: f64) -> f64 {
    if shift >= field.max() {
        return 0.0;
    }
    let grid = *field.grid();
    let n = grid.n();
    let (gx, gw) = gauss_legendre(8);
    let breaks: Vec<f64> = [shift, r, -r].into_iter().filter(|v| v.is_finite()).collect();
    let integrand = |v: f64, d: f64| psi_r(v, r) * d * (v - shift).max(0.0);
    let line_integral = |samples: &[f64]| -> f64 {
        let line = TrigLine::new(samples, grid.length());
        const REFINE: usize = 4;
        let m = n * REFINE;
        let h = grid.length() / m as f64;
        let nodes: Vec<(f64, f64)> = (0..=m).map(|i| line.eval(i as f64 * h)).collect();
        let mut total = 0.0;
        for i in 0..m {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            // split at an extremum so each piece crosses every level at most once
            let mut pieces = vec![(a, nodes[i].0)];
            if nodes[i].1 * nodes[i + 1].1 < 0.0 {
                let e = bisect(|s| line.eval(s).1, a, b, 60);
                pieces.push((e, line.eval(e).0));
            }
            pieces.push((b, nodes[i + 1].0));
            let mut cuts: Vec<f64> = pieces.iter().map(|p| p.0).collect();
            for w in pieces.windows(2) {
                let ((pa, va), (pb, vb)) = (w[0], w[1]);
                for &c in &breaks {
                    if (va - c) * (vb - c) < 0.0 {
                        cuts.push(bisect(|s| line.eval(s).0 - c, pa, pb, 60));
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (x, wt) in gx.iter().zip(&gw) {
                    let (v, d) = line.eval(mid + half * x);
                    total += wt * half * integrand(v, d);
                }
            }
        }
        total
    };
    (0..grid.dim())
        .map(|axis| {
            let lines: Vec<Vec<f64>> = if grid.dim() == 1 {
                vec![field.values().to_vec()]
            } else {
                (0..n)
                    .map(|other| {
                        (0..n)
                            .map(|along| {
                                let idx = if axis == 0 { [along, other] } else { [other, along] };
                                field.values()[grid.flatten(idx)]
                            })
                            .collect()
                    })
                    .collect()
            };
            let weight = if grid.dim() == 1 { 1.0 } else { grid.spacing() };
            let parts: Vec<f64> = lines.par_iter().map(|l| line_integral(l)).collect();
            let s: f64 = parts.iter().sum();
            (s * weight).abs()
        })
        .fold(0.0, f64::max)
}

/// Node samples on the box `[−1, 1]^d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxField {
    dim: usize,
    n: usize,
    values: Vec<f64>,
}

impl BoxField {
    pub fn new(dim: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return invalid(format!("box dimension must be 1, 2 or 3, got {dim}"));
        }
        if n < 3 {
            return invalid("need at least 3 nodes per axis");
        }
        if values.len() != n.pow(dim as u32) {
            return Err(FieldError::LayoutMismatch { expected: n.pow(dim as u32), got: values.len() }.into());
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i).into());
        }
        Ok(Self { dim, n, values })
    }

    pub fn from_fn(dim: usize, n: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let h = 2.0 / (n - 1) as f64;
        let total = n.pow(dim as u32);
        let values = (0..total)
            .map(|flat| {
                let p: Vec<f64> = Self::index(dim, n, flat).iter().map(|&i| -1.0 + i as f64 * h).collect();
                f(&p)
            })
            .collect();
        Self::new(dim, n, values)
    }

    fn index(dim: usize, n: usize, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; dim];
        for d in (0..dim).rev() {
            idx[d] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        2.0 / (self.n - 1) as f64
    }
}

/// Measures `|A||B| / (‖∇ω‖₂ |C|^{1/2})` for `A = {ω ≤ 0}`, `B = {ω ≥ 1}`,
/// `C = {0 < ω < 1}` with trapezoid node weights and centered differences.
pub fn isoperimetric_ratio(omega: &BoxField) -> DiagnosticReport {
    let (dim, n) = (omega.dim, omega.n);
    let h = omega.spacing();
    let stride = |d: usize| n.pow((dim - 1 - d) as u32);
    let (mut a, mut b, mut c, mut grad2) = (0.0, 0.0, 0.0, 0.0);
    for (flat, &v) in omega.values.iter().enumerate() {
        let idx = BoxField::index(dim, n, flat);
        let w: f64 = idx.iter().map(|&i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).product();
        if v <= 0.0 {
            a += w;
        } else if v >= 1.0 {
            b += w;
        } else {
            c += w;
        }
        let mut g2 = 0.0;
        for (d, &i) in idx.iter().enumerate() {
            let s = stride(d);
            let at = |j: usize| omega.values[flat - i * s + j * s];
            let g = if i == 0 {
                (at(1) - at(0)) / h
            } else if i == n - 1 {
                (at(n - 1) - at(n - 2)) / h
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            };
            g2 += g * g;
        }
        grad2 += w * g2;
    }
    let grad = grad2.sqrt();
    let ratio = if a * b == 0.0 {
        0.0
    } else if c == 0.0 || grad == 0.0 {
        f64::INFINITY
    } else {
        a * b / (grad * c.sqrt())
    };
    let mut rep = DiagnosticReport::new("isoperimetric_ratio", 0.0)
        .measure("measure_a", a)
        .measure("measure_b", b)
        .measure("measure_c", c)
        .measure("h1_seminorm", grad)
        .measure("ratio", ratio)
        .with_passed(ratio.is_finite());
    if !ratio.is_finite() {
        rep = rep.note("empty transition region between the sublevel and superlevel sets");
    }
    rep
}

/// Inputs of [`degiorgi_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsInputs {
    pub lambda: f64,
    pub dim: usize,
    pub c0: f64,
    pub phi: f64,
    /// Levels checked for the `δ` condition (and the `M` conditions below `12N`).
    #[serde(default = "default_k_verify")]
    pub k_verify: usize,
    /// `C` in the first `ε₀` bound.
    #[serde(default = "one")]
    pub c_energy: f64,
    /// `C̃` in the second `ε₀` bound.
    #[serde(default = "one")]
    pub c_tilde: f64,
    #[serde(default = "one")]
    pub sobolev_constant: f64,
}

fn default_k_verify() -> usize {
    64
}
fn one() -> f64 {
    1.0
}

impl ConstantsInputs {
    pub fn new(lambda: f64, dim: usize, c0: f64, phi: f64) -> Self {
        Self {
            lambda,
            dim,
            c0,
            phi,
            k_verify: default_k_verify(),
            c_energy: 1.0,
            c_tilde: 1.0,
            sobolev_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiConstants {
    pub inputs: ConstantsInputs,
    pub delta: f64,
    pub ln_m: f64,
    pub m_rec: f64,
    pub ln_eps0: f64,
    pub eps0_bound: f64,
    pub p1_l2: f64,
    /// Levels `(from, to)` on which the recurrence-closing condition is checked.
    pub closecircle_range: (usize, usize),
    /// Highest level checked for the `M^{k/2}` condition.
    pub k_m_max: usize,
}

/// `ln` of both sides of the `δ` condition at level `k`.
pub fn condition_delta(lambda: f64, dim: usize, delta: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let decay = (-kf * (2.0 * delta).ln()).exp() / (4.0 * (SQRT_2 + 1.0));
    let lhs = (2.0 * dim as f64 * 2.0 * SQRT_2).ln() - decay;
    let rhs = lambda.ln() - (kf + 2.0) * 2f64.ln();
    (lhs, rhs)
}

/// `ln` of both sides of the `M^{k/2}` condition at level `k`.
pub fn condition_m(lambda: f64, dim: usize, delta: f64, ln_m: f64, p1: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let lhs = p1.ln() - 0.5 * kf * ln_m - 0.5 * dim as f64 * (kf + 1.0) * delta.ln();
    let rhs = lambda.ln() - (kf + 2.0) * 2f64.ln();
    (lhs, rhs)
}

/// `ln` of both sides of `M^{−k} ≥ C0^k (M^{−(k−3)})^{1+1/N}`, returned as
/// `(left, right)` with the inequality reading `left >= right`.
pub fn condition_closecircle(c0: f64, dim: usize, ln_m: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let p = 1.0 + 1.0 / dim as f64;
    (-kf * ln_m, kf * c0.ln() - (kf - 3.0) * p * ln_m)
}

/// `‖P(1)‖_{L²(R^N)}` for the unit-mass kernel `c_N z (z² + |x|²)^{−(N+1)/2}`,
/// by radial quadrature.
pub fn poisson_kernel_l2(dim: usize) -> f64 {
    let nd = dim as f64;
    let sphere = if dim == 1 { 2.0 } else { 2.0 * PI };
    let radial = |f: &dyn Fn(f64) -> f64| -> f64 {
        // r = tan φ on [0, π/2), composite Gauss–Legendre
        let (x, w) = gauss_legendre(16);
        let panels = 64;
        let width = 0.5 * PI / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                let phi = mid + 0.5 * width * xi;
                let r = phi.tan();
                let jac = 1.0 / phi.cos().powi(2);
                s += wi * 0.5 * width * r.powi(dim as i32 - 1) * f(r) * jac;
            }
        }
        sphere * s
    };
    let mass = radial(&|r| (1.0 + r * r).powf(-(nd + 1.0) / 2.0));
    let sq = radial(&|r| (1.0 + r * r).powf(-(nd + 1.0)));
    sq.sqrt() / mass
}

/// `Φ = 2N·C_N·(9 C_θ)²`: the local energy constant for `|L + C_k/β| ≤ 8C_θ`
/// and `‖θ‖∞ ≤ C_θ`.
pub fn phi_from_bound(dim: usize, sobolev_constant: f64, c_theta: f64) -> f64 {
    2.0 * dim as f64 * sobolev_constant * (9.0 * c_theta).powi(2)
}

/// Largest `δ` satisfying the `δ` condition for `k = 1..=k_verify`, smallest
/// power-of-two `M` satisfying the `M^{k/2}` condition on the same range and
/// the closing condition for `k ≥ 12N`, and the resulting `ε₀` bound.
///
/// The closing condition fails for every `M > 1` when `k ≤ 3N + 3`, so it is
/// only required from `k = 12N` on.
pub fn degiorgi_constants(inputs: &ConstantsInputs) -> Result<DeGiorgiConstants> {
    let ConstantsInputs { lambda, dim, c0, phi, k_verify, .. } = *inputs;
    if !(lambda > 0.0 && lambda < 0.5) {
        return invalid(format!("lambda must lie in (0, 1/2), got {lambda}"));
    }
    if dim != 1 && dim != 2 {
        return invalid(format!("N must be 1 or 2, got {dim}"));
    }
    if !(c0 > 1.0 && c0.is_finite()) {
        return invalid(format!("C0 must be > 1, got {c0}"));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return invalid(format!("Phi must be > 0, got {phi}"));
    }
    if k_verify == 0 {
        return invalid("k_verify must be >= 1");
    }
    if !(inputs.c_energy > 0.0 && inputs.c_tilde > 0.0) {
        return invalid("C and C~ must be positive");
    }
    let delta_ok = |d: f64| (1..=k_verify).all(|k| {
        let (l, r) = condition_delta(lambda, dim, d, k);
        l <= r
    });
    let mut j = 1;
    while !delta_ok(0.5f64.powi(j)) {
        j += 1;
        if j > 60 {
            return Err(DeGiorgiError::NoAdmissible("delta"));
        }
    }
    let (mut good, mut bad) = (0.5f64.powi(j), 0.5f64.powi(j - 1));
    for _ in 0..80 {
        let mid = 0.5 * (good + bad);
        if delta_ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let delta = good;
    let p1 = poisson_kernel_l2(dim);
    let k_cc = 12 * dim;
    let k_hi = k_verify.max(k_cc);
    let m_ok = |ln_m: f64| {
        (1..=k_hi).all(|k| {
            let (l, r) = condition_m(lambda, dim, delta, ln_m, p1, k);
            l <= r
        }) && (k_cc..=k_hi).all(|k| {
            let (l, r) = condition_closecircle(c0, dim, ln_m, k);
            l >= r
        })
    };
    let ln2 = 2f64.ln();
    let mut jm = 1;
    while !m_ok(jm as f64 * ln2) {
        jm += 1;
        if jm > 100_000 {
            return Err(DeGiorgiError::NoAdmissible("M"));
        }
    }
    let ln_m = jm as f64 * ln2;
    let nd = dim as f64;
    let ln_first =
        -(12.0 * nd * ln_m + 24.0 * nd * ln2 + inputs.c_energy.ln() + (1.0 + phi).ln());
    let ln_second = 2.0 * (2.0 * lambda / (inputs.c_tilde * p1)).ln();
    let ln_eps0 = ln_first.min(ln_second);
    Ok(DeGiorgiConstants {
        inputs: *inputs,
        delta,
        ln_m,
        m_rec: ln_m.exp(),
        ln_eps0,
        eps0_bound: ln_eps0.exp(),
        p1_l2: p1,
        closecircle_range: (k_cc, k_hi),
        k_m_max: k_hi,
    })
}

/// Independent re-evaluation of every condition at the returned constants.
pub fn verify_constants(c: &DeGiorgiConstants) -> DiagnosticReport {
    let i = &c.inputs;
    let mut worst_delta = f64::NEG_INFINITY;
    for k in 1..=i.k_verify {
        let (l, r) = condition_delta(i.lambda, i.dim, c.delta, k);
        worst_delta = worst_delta.max(l - r);
    }
    let mut worst_m = f64::NEG_INFINITY;
    for k in 1..=c.k_m_max {
        let (l, r) = condition_m(i.lambda, i.dim, c.delta, c.ln_m, c.p1_l2, k);
        worst_m = worst_m.max(l - r);
    }
    let mut worst_cc = f64::NEG_INFINITY;
    for k in c.closecircle_range.0..=c.closecircle_range.1 {
        let (l, r) = condition_closecircle(i.c0, i.dim, c.ln_m, k);
        worst_cc = worst_cc.max(r - l);
    }
    DiagnosticReport::new("degiorgi_constants", 0.0)
        .measure("delta", c.delta)
        .measure("ln_m", c.ln_m)
        .measure("ln_eps0", c.ln_eps0)
        .measure("worst_log_gap_delta", worst_delta)
        .measure("worst_log_gap_m", worst_m)
        .measure("worst_log_gap_closecircle", worst_cc)
        .with_passed(worst_delta <= 0.0 && worst_m <= 0.0 && worst_cc <= 0.0)
        .note("eps0 assumes C = C~ = the configured values")
}
