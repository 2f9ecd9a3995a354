//! Periodic grids, real/spectral transforms, spectral derivatives and norms.
//!
//! Every other module computes on these types. A [`RealField`] holds samples on
//! a uniform periodic grid; a [`Spectrum`] holds its Fourier coefficients with
//! the forward transform divided by the total point count, so a coefficient is
//! the amplitude of its mode (`cos(3x)` has weight ½ on the modes ±3).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("dim must be 1 or 2, got {0}")]
    BadDim(usize),
    #[error("n must be even, got {0}")]
    OddPoints(usize),
    #[error("n must be at least 8, got {0}")]
    TooFewPoints(usize),
    #[error("length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("layout mismatch: grid holds {expected} samples, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// Uniform periodic grid on the torus `[0, length)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

/// Unvalidated serialized form of a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl TryFrom<GridSpec> for Grid {
    type Error = FieldError;
    fn try_from(spec: GridSpec) -> Result<Self, Self::Error> {
        Grid::new(spec.dim, spec.n, spec.length)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec { dim: g.dim, n: g.n, length: g.length }
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self, FieldError> {
        if dim != 1 && dim != 2 {
            return Err(FieldError::BadDim(dim));
        }
        if !n.is_multiple_of(2) {
            return Err(FieldError::OddPoints(n));
        }
        if n < 8 {
            return Err(FieldError::TooFewPoints(n));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(FieldError::BadLength(length));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Period per dimension.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn total_points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Measure of the torus.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Integer mode number of FFT index `i`, in `[-n/2, n/2)`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI / self.length * self.mode(i) as f64
    }

    /// Wavenumbers of one axis in FFT order.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Per-axis indices of a flat row-major index (axis 0 varies slowest).
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    /// Physical coordinates of a flat index; only the first `dim` entries matter.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let [a, b] = self.unflatten(flat);
        [self.coordinate(a), self.coordinate(b)]
    }

    /// Wavevector of a flat index; only the first `dim` entries matter.
    pub fn wavevector(&self, flat: usize) -> [f64; 2] {
        let [a, b] = self.unflatten(flat);
        if self.dim == 1 {
            [self.wavenumber(a), 0.0]
        } else {
            [self.wavenumber(a), self.wavenumber(b)]
        }
    }

    pub fn wavevector_norm(&self, flat: usize) -> f64 {
        let [a, b] = self.wavevector(flat);
        a.hypot(b)
    }

    /// `true` when the flat index lies inside the 2/3-rule band on every axis.
    pub fn in_dealias_band(&self, flat: usize) -> bool {
        let idx = self.unflatten(flat);
        (0..self.dim).all(|ax| 3 * self.mode(idx[ax]).unsigned_abs() < self.n as u64)
    }

    /// Same mode count, period divided by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Grid, FieldError> {
        Grid::new(self.dim, self.n, self.length / factor)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

/// Real samples on a periodic grid, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.total_points() {
            return Err(FieldError::LayoutMismatch {
                expected: grid.total_points(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.total_points()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.total_points()] }
    }

    /// Samples `f` at every grid point. The closure receives `dim` coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.total_points())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(
        &self,
        other: &RealField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, FieldError> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn check_same_grid(&self, other: &RealField) -> Result<(), FieldError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Riemann sum over the torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Grid inner product `∫ f g`.
    pub fn inner(&self, other: &RealField) -> Result<f64, FieldError> {
        self.check_same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn transform(&self) -> Spectrum {
        transform(self)
    }
}

/// Fourier coefficients of a real field, same layout as the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self, FieldError> {
        if coeffs.len() != grid.total_points() {
            return Err(FieldError::LayoutMismatch {
                expected: grid.total_points(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.total_points()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of the mode with the given integer mode numbers.
    pub fn mode(&self, modes: &[i64]) -> Complex64 {
        let n = self.grid.n as i64;
        let idx = |m: i64| m.rem_euclid(n) as usize;
        let flat = if self.grid.dim == 1 {
            idx(modes[0])
        } else {
            self.grid.flatten([idx(modes[0]), idx(modes[1])])
        };
        self.coeffs[flat]
    }

    /// Multiplies each coefficient by a real symbol of its wavevector.
    pub fn apply_symbol(&self, symbol: impl Fn(&[f64]) -> f64) -> Spectrum {
        let dim = self.grid.dim;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = self.grid.wavevector(i);
                c * symbol(&k[..dim])
            })
            .collect();
        Spectrum { grid: self.grid, coeffs }
    }

    /// Multiplies each coefficient by a symbol of the wavevector norm `|k|`.
    pub fn apply_radial(&self, symbol: impl Fn(f64) -> f64) -> Spectrum {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(self.grid.wavevector_norm(i)))
            .collect();
        Spectrum { grid: self.grid, coeffs }
    }

    /// Spectral `∂_axis`: multiplication by `i k_axis`, Nyquist mode dropped.
    pub fn derivative(&self, axis: usize) -> Result<Spectrum, FieldError> {
        if axis >= self.grid.dim {
            return Err(FieldError::AxisOutOfRange { axis, dim: self.grid.dim });
        }
        let nyq = self.grid.n / 2;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let idx = self.grid.unflatten(i);
                if idx[axis] == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, self.grid.wavenumber(idx[axis]))
                }
            })
            .collect();
        Ok(Spectrum { grid: self.grid, coeffs })
    }

    /// Zeros every mode outside the 2/3-rule band.
    pub fn dealias(mut self) -> Spectrum {
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            if !self.grid.in_dealias_band(i) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self
    }

    /// `|torus| Σ |c_k|²`, equal to `∫ f²` by Parseval.
    pub fn l2_squared(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `|torus| Σ |k| |c_k|²`, the squared homogeneous `H^{1/2}` seminorm.
    pub fn hhalf_squared(&self) -> f64 {
        self.grid.volume()
            * self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| self.grid.wavevector_norm(i) * c.norm_sqr())
                .sum::<f64>()
    }

    pub fn inverse(&self) -> RealField {
        inverse(self)
    }

    pub fn add_scaled(&mut self, other: &Spectrum, s: f64) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    type Registry = RwLock<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;
    static PLANS: OnceLock<Registry> = OnceLock::new();
    let key = (n, direction == FftDirection::Forward);
    let plans = PLANS.get_or_init(Default::default);
    if let Some(p) = plans.read().expect("fft plan registry poisoned").get(&key) {
        return Arc::clone(p);
    }
    let mut w = plans.write().expect("fft plan registry poisoned");
    Arc::clone(
        w.entry(key).or_insert_with(|| FftPlanner::new().plan_fft(n, direction)),
    )
}

/// Unnormalized in-place DFT over every axis of the grid.
fn fft_in_place(grid: &Grid, buf: &mut [Complex64], direction: FftDirection) {
    let n = grid.n;
    let p = plan(n, direction);
    p.process(buf);
    if grid.dim == 2 {
        let mut col = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                col[j * n + i] = buf[i * n + j];
            }
        }
        p.process(&mut col);
        for i in 0..n {
            for j in 0..n {
                buf[i * n + j] = col[j * n + i];
            }
        }
    }
}

/// Forward transform, normalized by the total point count.
pub fn transform(field: &RealField) -> Spectrum {
    let mut buf: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&field.grid, &mut buf, FftDirection::Forward);
    let scale = 1.0 / field.grid.total_points() as f64;
    for c in &mut buf {
        *c *= scale;
    }
    Spectrum { grid: field.grid, coeffs: buf }
}

/// Inverse transform; the imaginary part (round-off for conjugate-symmetric
/// input) is discarded.
pub fn inverse(spec: &Spectrum) -> RealField {
    let mut buf = spec.coeffs.clone();
    fft_in_place(&spec.grid, &mut buf, FftDirection::Inverse);
    RealField { grid: spec.grid, values: buf.into_iter().map(|c| c.re).collect() }
}

/// Spectral derivative along `axis`, optionally restricted to the 2/3 band.
pub fn derivative(field: &RealField, axis: usize, dealias: bool) -> Result<RealField, FieldError> {
    let mut spec = transform(field);
    if dealias {
        spec = spec.dealias();
    }
    Ok(spec.derivative(axis)?.inverse())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub hhalf: f64,
}

pub fn norms(field: &RealField) -> Norms {
    let spec = transform(field);
    Norms {
        l2: spec.l2_squared().sqrt(),
        linf: field.linf(),
        hhalf: spec.hhalf_squared().max(0.0).sqrt(),
    }
}

/// SplitMix64: the 64-bit counter-based generator used for every seeded
/// random field, so seeds reproduce across implementations.
///
/// State advances by `0x9E3779B97F4A7C15`; output is the standard
/// `(z ^ z>>30) * 0xBF58476D1CE4E5B9`, `(z ^ z>>27) * 0x94D049BB133111EB`,
/// `z ^ z>>31` mix. Floats take the top 53 bits.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Random mean-zero real field with modes `0 < max_j |m_j| <= max_mode`.
///
/// Coefficients are drawn in flat FFT order: for each index whose conjugate
/// partner has a larger flat index, real and imaginary parts are uniform in
/// `[-1, 1]` times `(1 + |m|)^(-decay)`; the partner receives the conjugate.
/// The result is scaled to sup norm `amplitude`.
pub fn random_band_limited(
    grid: Grid,
    max_mode: usize,
    decay: f64,
    amplitude: f64,
    seed: u64,
) -> RealField {
    let mut rng = SplitMix64::new(seed);
    let mut spec = Spectrum::zeros(grid);
    let n = grid.n;
    let partner = |flat: usize| -> usize {
        let [a, b] = grid.unflatten(flat);
        let neg = |i: usize| (n - i) % n;
        if grid.dim == 1 {
            neg(a)
        } else {
            grid.flatten([neg(a), neg(b)])
        }
    };
    let max_mode = max_mode.min(n / 2 - 1) as u64;
    for flat in 0..grid.total_points() {
        let idx = grid.unflatten(flat);
        let mmax = (0..grid.dim).map(|ax| grid.mode(idx[ax]).unsigned_abs()).max().unwrap_or(0);
        if mmax == 0 || mmax > max_mode {
            continue;
        }
        let p = partner(flat);
        if p <= flat {
            continue;
        }
        let mnorm = (0..grid.dim)
            .map(|ax| (grid.mode(idx[ax]) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let w = (1.0 + mnorm).powf(-decay);
        let c = Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)) * w;
        spec.coeffs[flat] = c;
        spec.coeffs[p] = c.conj();
    }
    let f = spec.inverse();
    let m = f.linf();
    if m == 0.0 {
        f
    } else {
        f.map(|v| v * amplitude / m)
    }
}
