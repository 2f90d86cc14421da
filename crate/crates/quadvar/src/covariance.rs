//! Matérn covariance model and the principal irregular term G_ν.
//!
//! The model is parametrized as
//!
//! K(r) = σ² · (αr)^ν · K_ν(αr) / (2^{ν−1} Γ(ν)),      K(0) = σ²,
//!
//! with smoothness ν > 0, inverse range α > 0 and standard deviation σ > 0.
//! Near r = 0 the even powers of r in the expansion of K are smooth; the
//! lowest non-even term is β*·G_ν(r) with
//!
//! G_ν(r) = r^{2ν}            (ν not an integer)
//! G_ν(r) = r^{2ν} · log r    (ν an integer),
//!
//! and it is this term that carries the sample-path roughness the estimators
//! in this crate recover. [`principal_irregular_coefficient`] exposes the
//! model's β*.

mod special;

use crate::designs::SiteSet;
use nalgebra::DMatrix;
use thiserror::Error;

pub use special::gamma;

/// Absolute tolerance for deciding whether a smoothness value is an integer
/// (selects the logarithmic branch of G_ν).
pub const INTEGER_NU_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("distance must be nonnegative and finite, got {0}")]
    InvalidDistance(f64),
    #[error("smoothness nu must be positive and finite, got {0}")]
    InvalidNu(f64),
    #[error("model parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("Bessel K order must be nonnegative, got {0}")]
    InvalidBesselOrder(f64),
    #[error("Bessel K argument must be positive, got {0}")]
    InvalidBesselArgument(f64),
    #[error("Bessel K iteration failed to converge for nu = {nu}, x = {x}")]
    BesselNoConvergence { nu: f64, x: f64 },
}

/// Rounds ν to the nearest integer when it lies within
/// [`INTEGER_NU_TOLERANCE`]; `None` for genuinely fractional ν.
pub fn integer_nu(nu: f64) -> Option<u32> {
    let rounded = nu.round();
    if (nu - rounded).abs() <= INTEGER_NU_TOLERANCE && rounded >= 0.0 {
        Some(rounded as u32)
    } else {
        None
    }
}

/// The principal irregular function G_ν(s): s^{2ν} for fractional ν,
/// s^{2ν}·log s for integer ν, and G_ν(0) = 0.
pub fn g_nu(s: f64, nu: f64) -> Result<f64, CovarianceError> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(CovarianceError::InvalidDistance(s));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(CovarianceError::InvalidNu(nu));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(match integer_nu(nu) {
        Some(p) => s.powi(2 * p as i32) * s.ln(),
        None => s.powf(2.0 * nu),
    })
}

/// Modified Bessel function of the second kind, real order.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64, CovarianceError> {
    if !nu.is_finite() || nu < 0.0 {
        return Err(CovarianceError::InvalidBesselOrder(nu));
    }
    if !x.is_finite() || x <= 0.0 {
        return Err(CovarianceError::InvalidBesselArgument(x));
    }
    special::bessel_k(nu, x).ok_or(CovarianceError::BesselNoConvergence { nu, x })
}

/// Stationary isotropic Matérn covariance model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CovarianceModel {
    /// Smoothness index ν.
    pub nu: f64,
    /// Inverse range α.
    pub alpha: f64,
    /// Standard deviation σ (marginal variance σ²).
    pub sigma: f64,
}

impl CovarianceModel {
    pub fn new(nu: f64, alpha: f64, sigma: f64) -> Result<Self, CovarianceError> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(CovarianceError::InvalidNu(nu));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(CovarianceError::InvalidParameter { name: "alpha", value: alpha });
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(CovarianceError::InvalidParameter { name: "sigma", value: sigma });
        }
        Ok(Self { nu, alpha, sigma })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Matérn covariance K(r) at separation distance r ≥ 0.
pub fn matern(model: &CovarianceModel, r: f64) -> Result<f64, CovarianceError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(CovarianceError::InvalidDistance(r));
    }
    if r == 0.0 {
        return Ok(model.sigma2());
    }
    let x = model.alpha * r;
    let t = x.powf(model.nu);
    // (αr)^ν this small forces K(r) = σ² to full double precision and keeps
    // the (αr)^ν · K_ν(αr) product away from underflow × overflow.
    if t < 1e-280 {
        return Ok(model.sigma2());
    }
    let k = bessel_k(model.nu, x)?;
    let norm = (2.0f64).powf(model.nu - 1.0) * special::gamma(model.nu);
    Ok(model.sigma2() * t * k / norm)
}

/// Coefficient β* of G_ν(r) in the small-r expansion of the Matérn model:
/// K(r) = (even polynomial in r) + β*·G_ν(r) + o(r^{2ν}).
///
/// For fractional ν, β* = −σ²·π·α^{2ν} / (sin(νπ)·Γ(ν)·Γ(ν+1)·2^{2ν});
/// for integer ν, β* = σ²·2·(−1)^{ν+1}·α^{2ν} / (2^{2ν}·(ν−1)!·ν!).
pub fn principal_irregular_coefficient(model: &CovarianceModel) -> f64 {
    let nu = model.nu;
    let a2nu = model.alpha.powf(2.0 * nu);
    let s2 = model.sigma2();
    match integer_nu(nu) {
        Some(p) => {
            let p = p as f64;
            let sign = if (p as u64) % 2 == 0 { -1.0 } else { 1.0 };
            s2 * 2.0 * sign * a2nu
                / ((2.0f64).powf(2.0 * p) * special::gamma(p) * special::gamma(p + 1.0))
        }
        None => {
            -s2 * std::f64::consts::PI * a2nu
                / ((nu * std::f64::consts::PI).sin()
                    * special::gamma(nu)
                    * special::gamma(nu + 1.0)
                    * (2.0f64).powf(2.0 * nu))
        }
    }
}

/// Dense covariance matrix K(‖x_i − x_j‖) over a site set.
///
/// The result is exactly symmetric (the upper triangle is computed once and
/// mirrored) with σ² on the diagonal.
pub fn covariance_matrix(
    model: &CovarianceModel,
    sites: &SiteSet,
) -> Result<DMatrix<f64>, CovarianceError> {
    let n = sites.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = model.sigma2();
        for j in (i + 1)..n {
            let v = matern(model, sites.distance(i, j))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}
