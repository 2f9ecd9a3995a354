//! Fractional Laplacian, Poisson semigroup, harmonic extension and the
//! pointwise convexity inequality for `Λ = (−Δ)^{1/2}`.

use rayon::prelude::*;

use crate::fields::{transform, FieldError, Grid, RealField};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FracError {
    #[error("alpha out of (0,1]: {0}")]
    AlphaOutOfRange(f64),
    #[error("z must be nonnegative and finite, got {0}")]
    NegativeZ(f64),
    #[error("malformed z levels: {0}")]
    MalformedLevels(&'static str),
    #[error("test function is not convex near {at}")]
    NonConvex { at: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn check_alpha(alpha: f64) -> Result<(), FracError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(FracError::AlphaOutOfRange(alpha))
    }
}

/// `(−Δ)^α` as the multiplier `|k|^{2α}`.
pub fn frac_laplacian(field: &RealField, alpha: f64) -> Result<RealField, FracError> {
    check_alpha(alpha)?;
    let p = 2.0 * alpha;
    Ok(transform(field).apply_radial(|k| if k == 0.0 { 0.0 } else { k.powf(p) }).inverse())
}

/// `Λ = (−Δ)^{1/2}`.
pub fn sqrt_laplacian(field: &RealField) -> RealField {
    transform(field).apply_radial(|k| k).inverse()
}

/// `P(z)`: multiplier `e^{−z|k|}`.
pub fn poisson_semigroup(field: &RealField, z: f64) -> Result<RealField, FracError> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(FracError::NegativeZ(z));
    }
    Ok(transform(field).apply_radial(|k| (-z * k).exp()).inverse())
}

/// Samples of `θ*(x, z) = P(z)θ(x)` on a list of heights.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField {
    grid: Grid,
    z_levels: Vec<f64>,
    slices: Vec<RealField>,
}

impl ExtendedField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn z_levels(&self) -> &[f64] {
        &self.z_levels
    }

    pub fn slices(&self) -> &[RealField] {
        &self.slices
    }

    pub fn slice(&self, level: usize) -> &RealField {
        &self.slices[level]
    }

    /// `max θ*` on each level.
    pub fn sup_per_slice(&self) -> Vec<f64> {
        self.slices.iter().map(RealField::max).collect()
    }
}

pub(crate) fn check_levels(z_levels: &[f64]) -> Result<(), FracError> {
    match z_levels.first() {
        None => return Err(FracError::MalformedLevels("empty")),
        Some(&z) if z != 0.0 => return Err(FracError::MalformedLevels("first level must be 0")),
        _ => {}
    }
    if z_levels.iter().any(|z| !z.is_finite()) {
        return Err(FracError::MalformedLevels("non-finite level"));
    }
    if z_levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FracError::MalformedLevels("levels must increase strictly"));
    }
    Ok(())
}

pub fn harmonic_extension(field: &RealField, z_levels: &[f64]) -> Result<ExtendedField, FracError> {
    check_levels(z_levels)?;
    let spec = transform(field);
    let slices = z_levels
        .par_iter()
        .map(|&z| {
            if z == 0.0 {
                field.clone()
            } else {
                spec.apply_radial(|k| (-z * k).exp()).inverse()
            }
        })
        .collect();
    Ok(ExtendedField { grid: *field.grid(), z_levels: z_levels.to_vec(), slices })
}

/// A scalar function with its derivative, used as `φ` in the convexity gap.
pub trait ConvexFunction {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// The built-in convex test functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexTestFunction {
    Identity,
    Square,
    /// `width·ln(1 + e^{(x−shift)/width})`, a smoothed `(x − shift)₊`.
    SmoothPositivePart { shift: f64, width: f64 },
}

impl ConvexTestFunction {
    /// Smoothed positive part with the default width of four grid spacings.
    pub fn smoothed_positive_part(shift: f64, grid: &Grid) -> Self {
        Self::SmoothPositivePart { shift, width: 4.0 * grid.spacing() }
    }
}

impl ConvexFunction for ConvexTestFunction {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Identity => x,
            Self::Square => x * x,
            Self::SmoothPositivePart { shift, width } => {
                let t = (x - shift) / width;
                width * (t.max(0.0) + (-t.abs()).exp().ln_1p())
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Identity => 1.0,
            Self::Square => 2.0 * x,
            Self::SmoothPositivePart { shift, width } => {
                let t = (x - shift) / width;
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// Rejects `phi` if a second difference on `[lo, hi]` is clearly negative.
pub fn check_convex<F: ConvexFunction + ?Sized>(phi: &F, lo: f64, hi: f64) -> Result<(), FracError> {
    const SAMPLES: usize = 513;
    let span = (hi - lo).max(1e-12 * (1.0 + lo.abs()));
    let (lo, hi) = (lo - 0.01 * span, hi + 0.01 * span);
    let h = (hi - lo) / (SAMPLES - 1) as f64;
    for i in 1..SAMPLES - 1 {
        let x = lo + i as f64 * h;
        let (a, b, c) = (phi.value(x - h), phi.value(x), phi.value(x + h));
        let scale = a.abs() + 2.0 * b.abs() + c.abs();
        if a - 2.0 * b + c < -1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(FracError::NonConvex { at: x });
        }
    }
    Ok(())
}

/// Pointwise `G = φ′(θ)·Λθ − Λ(φ(θ))`, nonnegative for convex `φ`.
pub fn cordoba_gap<F: ConvexFunction + ?Sized>(
    field: &RealField,
    phi: &F,
) -> Result<RealField, FracError> {
    cordoba_gap_alpha(field, phi, 0.5)
}

/// [`cordoba_gap`] with `(−Δ)^α` in place of `Λ`.
pub fn cordoba_gap_alpha<F: ConvexFunction + ?Sized>(
    field: &RealField,
    phi: &F,
    alpha: f64,
) -> Result<RealField, FracError> {
    check_alpha(alpha)?;
    check_convex(phi, field.min(), field.max())?;
    let lt = frac_laplacian(field, alpha)?;
    let lphi = frac_laplacian(&field.map(|v| phi.value(v)), alpha)?;
    let vals = field
        .values()
        .iter()
        .zip(lt.values())
        .zip(lphi.values())
        .map(|((&t, &l), &lp)| phi.derivative(t) * l - lp)
        .collect();
    Ok(RealField::new(*field.grid(), vals)?)
}
