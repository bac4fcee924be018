//! The cylindrical basis function: a Gaussian of the distance from a point
//! to a center, measured after projecting the offset onto the center's
//! tangent plane.
//!
//! Because the normal component of the offset is removed, the kernel is
//! constant along the center's normal line, and its Cartesian gradient is
//! orthogonal to that normal. Sums of these kernels have Cartesian
//! Laplacians computed from the closed form in [`cbf_laplacian`].

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const DEFAULT_TRUNCATION_EPSILON: f64 = 1e-5;

/// Accepted deviation of a center normal from unit length.
pub const UNIT_NORMAL_TOLERANCE: f64 = 1e-9;

/// Gaussian `exp(-c r²)` truncated to zero outside `r ≤ ρ` and wherever its
/// value drops to `truncation_epsilon` or below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    c: f64,
    support_radius: f64,
    truncation_epsilon: f64,
}

impl KernelConfig {
    pub fn new(c: f64, support_radius: f64, truncation_epsilon: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "shape parameter c={c} must be positive"
            )));
        }
        if !(support_radius > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "support radius {support_radius} must be positive"
            )));
        }
        if !(truncation_epsilon > 0.0 && truncation_epsilon < 1.0) {
            return Err(Error::InvalidKernel(format!(
                "truncation epsilon {truncation_epsilon} must lie in (0, 1)"
            )));
        }
        if support_radius.is_finite() {
            let tail = (-c * support_radius * support_radius).exp();
            if tail > truncation_epsilon * (1.0 + 1e-9) {
                return Err(Error::InvalidKernel(format!(
                    "kernel value {tail:e} at the support radius exceeds the truncation \
                     epsilon {truncation_epsilon:e}"
                )));
            }
        }
        Ok(KernelConfig {
            c,
            support_radius,
            truncation_epsilon,
        })
    }

    /// Untruncated-support kernel (`ρ = ∞`) with the default epsilon.
    pub fn global(c: f64) -> Result<Self> {
        Self::new(c, f64::INFINITY, DEFAULT_TRUNCATION_EPSILON)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn truncation_epsilon(&self) -> f64 {
        self.truncation_epsilon
    }

    pub fn is_global(&self) -> bool {
        self.support_radius.is_infinite()
    }

    /// Whether value and derivatives are nonzero at distance `r`.
    pub fn in_support(&self, r: f64) -> bool {
        r <= self.support_radius && (-self.c * r * r).exp() > self.truncation_epsilon
    }
}

/// Shape parameter chosen so that the kernel equals `truncation_epsilon`
/// exactly at `support_radius`: `c = ln(1/ε) / ρ²`.
pub fn shape_from_support(support_radius: f64, truncation_epsilon: f64) -> Result<KernelConfig> {
    if !(support_radius > 0.0 && support_radius.is_finite()) {
        return Err(Error::InvalidKernel(format!(
            "support radius {support_radius} must be positive and finite"
        )));
    }
    if !(truncation_epsilon > 0.0 && truncation_epsilon < 1.0) {
        return Err(Error::InvalidKernel(format!(
            "truncation epsilon {truncation_epsilon} must lie in (0, 1)"
        )));
    }
    let c = (1.0 / truncation_epsilon).ln() / (support_radius * support_radius);
    KernelConfig::new(c, support_radius, truncation_epsilon)
}

/// Offset from a center after removing its component along the center normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylindricalEvaluation {
    pub r: f64,
    pub r_vec: Vec3,
    /// `r_vec / r`; `None` on the center's normal line.
    pub r_hat: Option<Vec3>,
}

/// Below this projected distance a point is treated as lying on the
/// center's normal line.
fn axis_threshold(center: &Vec3) -> f64 {
    1e-10 * center.norm().max(1.0)
}

fn check_normal(normal: &Vec3) -> Result<()> {
    let norm = normal.norm();
    if (norm - 1.0).abs() <= UNIT_NORMAL_TOLERANCE {
        Ok(())
    } else {
        Err(Error::NonUnitNormal { norm })
    }
}

/// `r_vec = (x − center) − n[(x − center)·n]`, `r = ‖r_vec‖`.
pub fn cylindrical_distance(
    x: &Vec3,
    center: &Vec3,
    normal: &Vec3,
) -> Result<CylindricalEvaluation> {
    check_normal(normal)?;
    Ok(project(x, center, normal))
}

pub(crate) fn project(x: &Vec3, center: &Vec3, normal: &Vec3) -> CylindricalEvaluation {
    let n = normal / normal.norm();
    let d = x - center;
    let mut r_vec = d - n * d.dot(&n);
    // near the normal line the first pass leaves rounding along n that
    // dominates the tangential part
    r_vec -= n * r_vec.dot(&n);
    let r = r_vec.norm();
    let r_hat = (r >= axis_threshold(center)).then(|| r_vec / r);
    CylindricalEvaluation { r, r_vec, r_hat }
}

pub fn gaussian(r: f64, cfg: &KernelConfig) -> f64 {
    if cfg.in_support(r) {
        (-cfg.c * r * r).exp()
    } else {
        0.0
    }
}

/// `(φ′(r), φ″(r))` of the truncated Gaussian.
pub fn gaussian_derivatives(r: f64, cfg: &KernelConfig) -> (f64, f64) {
    if !cfg.in_support(r) {
        return (0.0, 0.0);
    }
    let c = cfg.c;
    let e = (-c * r * r).exp();
    (-2.0 * c * r * e, (4.0 * c * c * r * r - 2.0 * c) * e)
}

/// Kernel value `φ(r_j(x))` for the basis function centered at `center`.
pub fn cbf_value(x: &Vec3, center: &Vec3, normal: &Vec3, cfg: &KernelConfig) -> Result<f64> {
    Ok(gaussian(cylindrical_distance(x, center, normal)?.r, cfg))
}

/// Cartesian gradient `φ′(r) r̂`. It has no component along `normal`.
pub fn cbf_gradient(x: &Vec3, center: &Vec3, normal: &Vec3, cfg: &KernelConfig) -> Result<Vec3> {
    let ev = cylindrical_distance(x, center, normal)?;
    Ok(match ev.r_hat {
        Some(r_hat) => r_hat * gaussian_derivatives(ev.r, cfg).0,
        None => Vec3::zeros(),
    })
}

/// Cartesian Laplacian of `φ(r_j(x))`:
///
/// `φ″(r)(1 − (r̂·n)²) + φ′(r)(1 + (r̂·n)²)/r`
///
/// with `n` the center normal. On the normal line the limit
/// `φ″(0) + lim φ′(r)/r = −4c` is returned.
pub fn cbf_laplacian(x: &Vec3, center: &Vec3, normal: &Vec3, cfg: &KernelConfig) -> Result<f64> {
    let ev = cylindrical_distance(x, center, normal)?;
    Ok(laplacian_of(&ev, normal, cfg))
}

pub(crate) fn laplacian_of(ev: &CylindricalEvaluation, normal: &Vec3, cfg: &KernelConfig) -> f64 {
    match ev.r_hat {
        None => -4.0 * cfg.c,
        Some(r_hat) => {
            let (d1, d2) = gaussian_derivatives(ev.r, cfg);
            // identically zero when r_vec was projected with this normal
            let s = r_hat.dot(normal).powi(2);
            d2 * (1.0 - s) + d1 * (1.0 + s) / ev.r
        }
    }
}
