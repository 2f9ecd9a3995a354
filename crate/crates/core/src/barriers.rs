//! Dirichlet Laplace solves on boxes and strips for the barrier functions
//! `b₁`, `b₂`, `b₃` and the gap constants `λ`, `λ*`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numerics::fit_line;
use crate::report::DiagnosticReport;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BarrierError {
    #[error("invalid barrier problem: {0}")]
    InvalidProblem(String),
    #[error("relaxation did not converge in {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

type Result<T> = std::result::Result<T, BarrierError>;

/// Box `[−a, a]^N × [0, h]` or strip `[0, X] × [0, 1]`. The last lattice axis
/// is `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    Box { n_dim: usize, half_width: f64, height: f64 },
    Strip { length: f64 },
}

impl Geometry {
    /// Per-axis `(lo, hi)` bounds.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match *self {
            Geometry::Box { n_dim, half_width, height } => {
                let mut b = vec![(-half_width, half_width); n_dim];
                b.push((0.0, height));
                b
            }
            Geometry::Strip { length } => vec![(0.0, length), (0.0, 1.0)],
        }
    }
}

/// One face of the lattice box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub high: bool,
}

impl Face {
    pub fn low(axis: usize) -> Self {
        Self { axis, high: false }
    }

    pub fn high(axis: usize) -> Self {
        Self { axis, high: true }
    }
}

/// Dirichlet data on one face.
#[derive(Clone)]
pub enum FaceData {
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for FaceData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaceData::Constant(c) => write!(f, "Constant({c})"),
            FaceData::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl FaceData {
    fn at(&self, p: &[f64]) -> f64 {
        match self {
            FaceData::Constant(c) => *c,
            FaceData::Function(g) => g(p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierProblem {
    pub geometry: Geometry,
    /// Data on every face; faces not listed take `default_value`.
    pub faces: Vec<(Face, FaceData)>,
    pub default_value: f64,
    /// Lattice points per unit length.
    pub resolution: f64,
    pub max_sweeps: usize,
}

impl BarrierProblem {
    pub fn new(geometry: Geometry, default_value: f64, resolution: f64) -> Self {
        Self { geometry, faces: Vec::new(), default_value, resolution, max_sweeps: 200_000 }
    }

    pub fn with_face(mut self, face: Face, data: FaceData) -> Self {
        self.faces.push((face, data));
        self
    }

    fn face_value(&self, face: Face, p: &[f64]) -> f64 {
        self.faces
            .iter()
            .rev()
            .find(|(f, _)| *f == face)
            .map_or(self.default_value, |(_, d)| d.at(p))
    }
}

/// Node values on a uniform lattice, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub shape: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl LatticeField {
    fn strides(&self) -> Vec<usize> {
        let d = self.shape.len();
        let mut s = vec![1; d];
        for a in (0..d - 1).rev() {
            s[a] = s[a + 1] * self.shape[a + 1];
        }
        s
    }

    fn index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for a in (0..self.shape.len()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .zip(&self.origin)
            .map(|(&i, &o)| o + i as f64 * self.spacing)
            .collect()
    }

    /// Maximum over nodes inside the closed box `region` (one range per axis).
    pub fn max_over(&self, region: &[(f64, f64)]) -> f64 {
        let eps = 1e-9 * self.spacing;
        (0..self.values.len())
            .filter(|&i| {
                self.point(i)
                    .iter()
                    .zip(region)
                    .all(|(x, (lo, hi))| *x >= lo - eps && *x <= hi + eps)
            })
            .map(|i| self.values[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierResult {
    pub solution: LatticeField,
    pub max_on_subregion: Option<f64>,
    pub lambda_estimate: Option<f64>,
    /// `(resolution, estimate)` pairs from successive refinements.
    pub refinement_history: Vec<(f64, f64)>,
    pub sweeps: usize,
    pub residual: f64,
    pub boundary_range: (f64, f64),
}

impl BarrierResult {
    /// Discrete maximum principle: the solution stays within the boundary range.
    pub fn maximum_principle_holds(&self) -> bool {
        let (lo, hi) = self.boundary_range;
        let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
        self.solution.min() >= lo - slack && self.solution.max() <= hi + slack
    }
}

/// Second-order five/seven-point Laplace solve by red-black SOR, stopped when
/// the stencil residual `|Σ neighbours − 2d·u|` drops below
/// `1e−10·‖boundary‖∞`.
pub fn solve_barrier(problem: &BarrierProblem) -> Result<BarrierResult> {
    let bounds = problem.geometry.bounds();
    if let Geometry::Box { n_dim, .. } = problem.geometry {
        if n_dim != 1 && n_dim != 2 {
            return Err(BarrierError::InvalidProblem(format!("N must be 1 or 2, got {n_dim}")));
        }
    }
    if !(problem.resolution > 0.0 && problem.resolution.is_finite()) {
        return Err(BarrierError::InvalidProblem("resolution must be positive".into()));
    }
    let h = 1.0 / problem.resolution;
    let mut shape = Vec::with_capacity(bounds.len());
    for &(lo, hi) in &bounds {
        let cells = (hi - lo) / h;
        if !(hi > lo) || (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(BarrierError::InvalidProblem(format!(
                "extent [{lo}, {hi}] is not a positive multiple of the spacing {h}"
            )));
        }
        let pts = cells.round() as usize + 1;
        if pts < 17 {
            return Err(BarrierError::InvalidProblem(format!(
                "resolution gives {pts} points on an axis, need at least 17"
            )));
        }
        shape.push(pts);
    }
    let d = shape.len();
    let mut field = LatticeField {
        shape: shape.clone(),
        origin: bounds.iter().map(|b| b.0).collect(),
        spacing: h,
        values: vec![0.0; shape.iter().product()],
    };
    let strides = field.strides();
    let total = field.values.len();
    let mut interior = vec![true; total];
    let (mut bmin, mut bmax, mut bnorm) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for i in 0..total {
        let idx = field.index(i);
        let p = field.point(i);
        let mut v = f64::INFINITY;
        for a in 0..d {
            if idx[a] == 0 {
                v = v.min(problem.face_value(Face::low(a), &p));
            }
            if idx[a] == shape[a] - 1 {
                v = v.min(problem.face_value(Face::high(a), &p));
            }
        }
        if v.is_finite() {
            interior[i] = false;
            field.values[i] = v;
            bmin = bmin.min(v);
            bmax = bmax.max(v);
            bnorm = bnorm.max(v.abs());
        } else if v != f64::INFINITY {
            return Err(BarrierError::InvalidProblem("non-finite boundary data".into()));
        }
    }
    // start from the boundary mean to shorten the transient
    let mean = {
        let (s, c) = (0..total)
            .filter(|&i| !interior[i])
            .fold((0.0, 0usize), |(s, c), i| (s + field.values[i], c + 1));
        s / c as f64
    };
    for i in 0..total {
        if interior[i] {
            field.values[i] = mean;
        }
    }
    let colour: Vec<Vec<usize>> = (0..2)
        .map(|c| {
            (0..total)
                .filter(|&i| interior[i] && field.index(i).iter().sum::<usize>() % 2 == c)
                .collect()
        })
        .collect();
    let nmax = *shape.iter().max().expect("nonempty shape") as f64;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / nmax).sin());
    let tol = 1e-10 * bnorm;
    let diag = 2.0 * d as f64;
    let residual = |v: &[f64]| -> f64 {
        (0..total)
            .filter(|&i| interior[i])
            .map(|i| {
                let s: f64 = strides.iter().map(|&st| v[i - st] + v[i + st]).sum();
                (s - diag * v[i]).abs()
            })
            .fold(0.0, f64::max)
    };
    let mut sweeps = 0;
    let mut res = residual(&field.values);
    while res >= tol && res > 0.0 {
        if sweeps >= problem.max_sweeps {
            return Err(BarrierError::NotConverged { iterations: sweeps, residual: res });
        }
        for nodes in &colour {
            for &i in nodes {
                let v = &mut field.values;
                let s: f64 = strides.iter().map(|&st| v[i - st] + v[i + st]).sum();
                v[i] += omega * (s / diag - v[i]);
            }
        }
        sweeps += 1;
        if sweeps % 10 == 0 {
            res = residual(&field.values);
        }
    }
    Ok(BarrierResult {
        solution: field,
        max_on_subregion: None,
        lambda_estimate: None,
        refinement_history: Vec::new(),
        sweeps,
        residual: res,
        boundary_range: (bmin, bmax),
    })
}

/// `b₁` on `[−4,4]^N × [0,4]`: 0 on `z = 0`, 2 elsewhere; `λ = (2 − max_{B₂*} b₁)/4`.
pub fn b1_lambda(n_dim: usize, resolution: f64) -> Result<BarrierResult> {
    let p = BarrierProblem::new(Geometry::Box { n_dim, half_width: 4.0, height: 4.0 }, 2.0, resolution)
        .with_face(Face::low(n_dim), FaceData::Constant(0.0));
    let mut r = solve_barrier(&p)?;
    let mut region = vec![(-2.0, 2.0); n_dim];
    region.push((0.0, 2.0));
    let m = r.solution.max_over(&region);
    let lambda = (2.0 - m) / 4.0;
    r.max_on_subregion = Some(m);
    r.lambda_estimate = Some(lambda);
    r.refinement_history.push((resolution, lambda));
    Ok(r)
}

/// [`b1_lambda`] at each resolution, keeping the finest solve and the full
/// refinement history.
pub fn b1_lambda_refined(n_dim: usize, resolutions: &[f64]) -> Result<BarrierResult> {
    let mut history = Vec::new();
    let mut last = None;
    for &res in resolutions {
        let r = b1_lambda(n_dim, res)?;
        history.push((res, r.lambda_estimate.expect("set by b1_lambda")));
        last = Some(r);
    }
    let mut r = last.ok_or_else(|| BarrierError::InvalidProblem("no resolutions given".into()))?;
    r.refinement_history = history;
    Ok(r)
}

/// `b₃` on `B*_{1/16}` with `2 − λ/2^{k₀+1}` on `z = 0` and 2 elsewhere;
/// returns `λ* = 2 − max_{B*_{1/32}} b₃`.
pub fn lambda_star_estimate(n_dim: usize, k0: u32, lambda: f64, resolution: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&lambda) {
        return Err(BarrierError::InvalidProblem(format!("lambda must lie in [0, 1/2), got {lambda}")));
    }
    let side = 1.0 / 16.0;
    let drop = lambda / 2f64.powi(k0 as i32 + 1);
    let p = BarrierProblem::new(Geometry::Box { n_dim, half_width: side, height: side }, 2.0, resolution)
        .with_face(Face::low(n_dim), FaceData::Constant(2.0 - drop));
    let r = solve_barrier(&p)?;
    let mut region = vec![(-side / 2.0, side / 2.0); n_dim];
    region.push((0.0, side / 2.0));
    Ok(2.0 - r.solution.max_over(&region))
}

/// Pointwise tolerance of the `b₂` bound check.
pub const STRIP_GAP_TOLERANCE: f64 = 1e-6;

/// `b₂` on `[0, X] × [0, 1]` with 2 on `x = 0` and 0 on the other sides.
/// Reports `max (b₂ − 2√2 e^{−x/2})` and the slope of `ln max_z b₂` on
/// `x ∈ [1, X/2]`.
pub fn strip_bound_check(x_len: f64, resolution: f64) -> Result<DiagnosticReport> {
    if !(x_len >= 5.0) {
        return Err(BarrierError::InvalidProblem(format!("strip length must be >= 5, got {x_len}")));
    }
    let p = BarrierProblem::new(Geometry::Strip { length: x_len }, 0.0, resolution)
        .with_face(Face::low(0), FaceData::Constant(2.0));
    let r = solve_barrier(&p)?;
    let sol = &r.solution;
    let (nx, nz) = (sol.shape[0], sol.shape[1]);
    let h = sol.spacing;
    let mut gap = f64::NEG_INFINITY;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..nx {
        let x = i as f64 * h;
        let col = &sol.values[i * nz..(i + 1) * nz];
        let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        gap = gap.max(m - 2.0 * std::f64::consts::SQRT_2 * (-x / 2.0).exp());
        if x >= 1.0 - 1e-12 && x <= x_len / 2.0 + 1e-12 && m > 0.0 {
            xs.push(x);
            ys.push(m.ln());
        }
    }
    let rate = fit_line(&xs, &ys).map_or(f64::NAN, |f| f.slope);
    Ok(DiagnosticReport::new("strip_bound", STRIP_GAP_TOLERANCE)
        .measure("max_gap", gap)
        .measure("decay_rate", rate)
        .measure("resolution", resolution)
        .measure("sweeps", r.sweeps as f64)
        .with_passed(gap <= STRIP_GAP_TOLERANCE && r.maximum_principle_holds()))
}
