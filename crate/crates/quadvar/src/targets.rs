//! Deterministic target functions for the quadratic variations and their
//! ratios.
//!
//! Every statistic V has a deterministic counterpart obtained by replacing
//! each product of increments with the principal irregular term it extracts:
//! for a line transect
//!
//! f_{θ,ℓ}(ν) = 2 Σᵢ Σ_{k₁<k₂} a_{θ,ℓ;i,k₁} a_{θ,ℓ;i,k₂} G_ν(t_{i+θk₂} − t_{i+θk₁}),
//!
//! with chord distances in place of site gaps on curves and the four-corner
//! stencils on lattices (the defining sum over ordered pairs equals twice
//! this unordered sum). The prefactor β*_ν of the covariance model is
//! fixed to 1 throughout: estimation only ever consumes the ratios
//! F(ν*) = f_{2,ℓ}(ν*)/f_{1,ℓ}(ν*), where it cancels.
//!
//! [`RatioTarget`] precomputes the design geometry once and evaluates F on
//! the closed interval [0, cap], extending it continuously at the integer
//! junctions:
//!
//! * ν* = 0: G is replaced by its pointwise limit, the constant 1;
//! * interior integers p: the logarithmic branch s^{2p} log s, which is the
//!   two-sided limit because the rows annihilate s^{2p} there;
//! * ν* = cap when the cap is the design order (ℓ for line and curve, 2 for
//!   lattice): the plain power s^{2p}, which the sums converge to because
//!   the order-cap power is not annihilated.

use crate::covariance::{g_nu, integer_nu, CovarianceError};
use crate::designs::{CurveDesign, LatticeDesign, LineTransect};
use crate::qvar::{a_coefficients, b_coefficients, c_coefficients, QvarError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("nu = {nu} outside the evaluation domain ({lo}, {hi})")]
    OutsideDomain { nu: f64, lo: f64, hi: f64 },
    #[error("nu* = {nu} outside the ratio domain [0, {hi}]")]
    OutsideRatioDomain { nu: f64, hi: f64 },
    #[error("order ell = {0} unsupported here")]
    BadOrder(usize),
    #[error("scan upper bound {0} leaves an empty grid")]
    EmptyScan(f64),
    #[error("H_{ell} vanishes at nu = {nu}; this (ell, M) pair is unusable")]
    HZero { ell: usize, nu: f64 },
    #[error("map Jacobian vanishes at the requested point")]
    SingularMap,
    #[error(transparent)]
    Qvar(#[from] QvarError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetFamily {
    Line,
    Curve,
    Lattice,
}

/// One (weight, separation) pair of a target sum: weight is the product of
/// two increment coefficients, separation the distance G_ν is evaluated at.
#[derive(Debug, Clone, Copy)]
struct PairTerm {
    w: f64,
    s: f64,
    ln_s: f64,
}

fn line_pairs(
    design: &LineTransect,
    theta: usize,
    ell: usize,
) -> Result<Vec<PairTerm>, TargetError> {
    let n = design.n();
    let rows = n.checked_sub(theta * ell).filter(|&r| r >= 1).ok_or(
        QvarError::BadOrder { ell, max: (n - 1) / theta },
    )?;
    let mut pairs = Vec::with_capacity(rows * ell * (ell + 1) / 2);
    for i in 1..=rows {
        let row = a_coefficients(design, theta, ell, i)?;
        for k1 in 0..ell {
            for k2 in (k1 + 1)..=ell {
                let s = design.sites()[i - 1 + theta * k2] - design.sites()[i - 1 + theta * k1];
                pairs.push(PairTerm {
                    w: row.weights[k1] * row.weights[k2],
                    s,
                    ln_s: s.ln(),
                });
            }
        }
    }
    Ok(pairs)
}

fn curve_pairs(
    design: &CurveDesign,
    theta: usize,
    ell: usize,
) -> Result<Vec<PairTerm>, TargetError> {
    let n = design.n();
    let rows = n.checked_sub(theta * ell).filter(|&r| r >= 1).ok_or(
        QvarError::BadOrder { ell, max: (n - 1) / theta },
    )?;
    let mut pairs = Vec::with_capacity(rows * ell * (ell + 1) / 2);
    for i in 1..=rows {
        let row = b_coefficients(design, theta, ell, i)?;
        for k1 in 0..ell {
            for k2 in (k1 + 1)..=ell {
                let s = design.chord(i - 1 + theta * k1, i - 1 + theta * k2);
                pairs.push(PairTerm {
                    w: row.weights[k1] * row.weights[k2],
                    s,
                    ln_s: s.ln(),
                });
            }
        }
    }
    Ok(pairs)
}

fn lattice_pairs(
    design: &LatticeDesign,
    theta: usize,
    ell: usize,
) -> Result<Vec<PairTerm>, TargetError> {
    let n = design.side();
    if theta >= n {
        return Err(QvarError::BadTheta(theta).into());
    }
    let side = n - theta;
    let mut pairs = Vec::with_capacity(side * side * 6);
    for i1 in 1..=side {
        for i2 in 1..=side {
            let row = c_coefficients(design, theta, ell, i1, i2)?;
            let corners = [
                design.point(i1, i2),
                design.point(i1 + theta, i2),
                design.point(i1, i2 + theta),
                design.point(i1 + theta, i2 + theta),
            ];
            for a in 0..4 {
                for b in (a + 1)..4 {
                    let s = (corners[a][0] - corners[b][0])
                        .hypot(corners[a][1] - corners[b][1]);
                    pairs.push(PairTerm {
                        w: row.weights[a] * row.weights[b],
                        s,
                        ln_s: s.ln(),
                    });
                }
            }
        }
    }
    Ok(pairs)
}

fn open_domain(nu: f64, hi: f64) -> Result<(), TargetError> {
    if nu > 0.0 && nu < hi && nu.is_finite() {
        Ok(())
    } else {
        Err(TargetError::OutsideDomain { nu, lo: 0.0, hi })
    }
}

fn g_sum(pairs: &[PairTerm], nu: f64) -> Result<f64, TargetError> {
    let mut acc = 0.0;
    for p in pairs {
        acc += p.w * g_nu(p.s, nu)?;
    }
    Ok(acc)
}

/// Line-transect target f_{θ,ℓ}(ν) on the open interval ν ∈ (0, ℓ).
/// Integer ν uses the logarithmic branch of G_ν.
pub fn f_line(
    design: &LineTransect,
    theta: usize,
    ell: usize,
    nu: f64,
) -> Result<f64, TargetError> {
    open_domain(nu, ell as f64)?;
    Ok(2.0 * g_sum(&line_pairs(design, theta, ell)?, nu)?)
}

/// Curve target f̃_{θ,ℓ}(ν), ν ∈ (0, ℓ), built on chord distances.
pub fn f_curve(
    design: &CurveDesign,
    theta: usize,
    ell: usize,
    nu: f64,
) -> Result<f64, TargetError> {
    open_domain(nu, ell as f64)?;
    Ok(2.0 * g_sum(&curve_pairs(design, theta, ell)?, nu)?)
}

/// Lattice target f̄_{θ,ℓ}(ν), ν ∈ (0, 2). The defining sum runs over
/// ordered stencil pairs; this equals twice the unordered sum computed here.
pub fn f_lattice(
    design: &LatticeDesign,
    theta: usize,
    ell: usize,
    nu: f64,
) -> Result<f64, TargetError> {
    open_domain(nu, 2.0)?;
    Ok(2.0 * g_sum(&lattice_pairs(design, theta, ell)?, nu)?)
}

enum Branch {
    Ones,
    General(f64),
    Log(i32),
    Power(i32),
}

fn branch_sum(pairs: &[PairTerm], branch: &Branch) -> f64 {
    match *branch {
        Branch::Ones => pairs.iter().map(|p| p.w).sum(),
        Branch::General(nu) => {
            pairs.iter().map(|p| p.w * (2.0 * nu * p.ln_s).exp()).sum()
        }
        Branch::Log(p) => pairs.iter().map(|q| q.w * q.s.powi(2 * p) * q.ln_s).sum(),
        Branch::Power(p) => pairs.iter().map(|q| q.w * q.s.powi(2 * p)).sum(),
    }
}

/// The coarse-to-fine target ratio F(ν*) of a design, with the design
/// geometry precomputed and the integer junctions extended by their limits.
///
/// Each f_{θ,ℓ}(ν*) enters as a per-row average (per-cell for lattices)
/// rather than a raw sum, so F(ν*) = [f_{2,ℓ}(ν*)/rows₂]/[f_{1,ℓ}(ν*)/rows₁].
/// The row counts cancel against the matching per-row averages of the
/// observed variations in the estimation objective, which is therefore
/// unchanged by the normalization; the ratio itself gains the count-mismatch
/// term back: on an equispaced transect or an identity-map lattice the
/// averaged form equals its n → ∞ limit exactly, and in general
/// F(ν*) = 2^{2ν*−2ℓ} + O(n⁻¹) (2^{2ν*−2} for lattices), which is what
/// makes the ratio invertible for ν.
#[derive(Debug, Clone)]
pub struct RatioTarget {
    family: TargetFamily,
    ell: usize,
    cap: f64,
    order_cap: f64,
    pairs1: Vec<PairTerm>,
    pairs2: Vec<PairTerm>,
    count1: f64,
    count2: f64,
}

impl RatioTarget {
    /// Transect ratio of order ℓ, domain [0, min(M, ℓ)].
    pub fn line(design: &LineTransect, ell: usize, m: f64) -> Result<Self, TargetError> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(TargetError::OutsideRatioDomain { nu: m, hi: ell as f64 });
        }
        Ok(RatioTarget {
            family: TargetFamily::Line,
            ell,
            cap: m.min(ell as f64),
            order_cap: ell as f64,
            pairs1: line_pairs(design, 1, ell)?,
            pairs2: line_pairs(design, 2, ell)?,
            count1: (design.n() - ell) as f64,
            count2: (design.n() - 2 * ell) as f64,
        })
    }

    /// Curve ratio of order ℓ ∈ {1, 2}, domain [0, ℓ].
    pub fn curve(design: &CurveDesign, ell: usize) -> Result<Self, TargetError> {
        Ok(RatioTarget {
            family: TargetFamily::Curve,
            ell,
            cap: ell as f64,
            order_cap: ell as f64,
            pairs1: curve_pairs(design, 1, ell)?,
            pairs2: curve_pairs(design, 2, ell)?,
            count1: (design.n() - ell) as f64,
            count2: (design.n() - 2 * ell) as f64,
        })
    }

    /// Lattice ratio for stencil row ℓ ∈ {1, 2}, domain [0, 2].
    pub fn lattice(design: &LatticeDesign, ell: usize) -> Result<Self, TargetError> {
        let side = design.side();
        Ok(RatioTarget {
            family: TargetFamily::Lattice,
            ell,
            cap: 2.0,
            order_cap: 2.0,
            pairs1: lattice_pairs(design, 1, ell)?,
            pairs2: lattice_pairs(design, 2, ell)?,
            count1: ((side - 1) * (side - 1)) as f64,
            count2: ((side - 2) * (side - 2)) as f64,
        })
    }

    pub fn family(&self) -> TargetFamily {
        self.family
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Upper end of the evaluation domain [0, cap].
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// F(ν*) for ν* ∈ [0, cap].
    pub fn eval(&self, nu_star: f64) -> Result<f64, TargetError> {
        if !nu_star.is_finite() || nu_star < 0.0 || nu_star > self.cap {
            return Err(TargetError::OutsideRatioDomain { nu: nu_star, hi: self.cap });
        }
        let branch = match integer_nu(nu_star) {
            Some(0) => Branch::Ones,
            Some(p) if (p as f64) < self.order_cap => Branch::Log(p as i32),
            Some(p) => Branch::Power(p as i32),
            None => Branch::General(nu_star),
        };
        let mean2 = branch_sum(&self.pairs2, &branch) / self.count2;
        let mean1 = branch_sum(&self.pairs1, &branch) / self.count1;
        Ok(mean2 / mean1)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc: u64 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u64 / (j + 1) as u64;
    }
    acc as f64
}

/// H_ℓ(ν) = Σ_{0≤k₁<k₂≤ℓ} (−1)^{k₁+k₂} C(ℓ,k₁) C(ℓ,k₂) G_ν(k₂−k₁),
/// the order-ℓ factor of the equispaced target. Defined for ν ∈ (0, ℓ].
pub fn h_ell(ell: usize, nu: f64) -> Result<f64, TargetError> {
    if !(1..=crate::qvar::MAX_LINE_ORDER).contains(&ell) {
        return Err(TargetError::BadOrder(ell));
    }
    if !(nu > 0.0 && nu <= ell as f64) {
        return Err(TargetError::OutsideDomain { nu, lo: 0.0, hi: ell as f64 });
    }
    let mut acc = 0.0;
    for k1 in 0..ell {
        for k2 in (k1 + 1)..=ell {
            let sign = if (k1 + k2) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binomial(ell, k1) * binomial(ell, k2)
                * g_nu((k2 - k1) as f64, nu)?;
        }
    }
    Ok(acc)
}

/// Result of scanning |H_ℓ| over a grid of ν values.
#[derive(Debug, Clone, Copy)]
pub struct HScan {
    pub ell: usize,
    pub upper: f64,
    pub min_abs: f64,
    pub min_at: f64,
}

/// Grid step of [`h_ell_nonzero_scan`].
pub const H_SCAN_STEP: f64 = 1e-3;

/// Verifies H_ℓ has no zero on the grid {k·10⁻³ : k ≥ 1} ∩ (0, m].
///
/// A zero of H_ℓ inside the search interval would make the order-ℓ target
/// ratio uninformative there; estimators require this scan to pass for
/// their (ℓ, M) combination.
pub fn h_ell_nonzero_scan(ell: usize, m: f64) -> Result<HScan, TargetError> {
    if !(1..=crate::qvar::MAX_LINE_ORDER).contains(&ell) {
        return Err(TargetError::BadOrder(ell));
    }
    if !(m >= H_SCAN_STEP) || m > ell as f64 {
        return Err(TargetError::EmptyScan(m));
    }
    let steps = (m / H_SCAN_STEP + 1e-9).floor() as usize;
    let mut min_abs = f64::INFINITY;
    let mut min_at = 0.0;
    for k in 1..=steps {
        let nu = k as f64 * H_SCAN_STEP;
        let h = h_ell(ell, nu)?.abs();
        if h < min_abs {
            min_abs = h;
            min_at = nu;
        }
    }
    if min_abs == 0.0 {
        return Err(TargetError::HZero { ell, nu: min_at });
    }
    Ok(HScan { ell, upper: m, min_abs, min_at })
}

/// First-order partial derivatives of a planar map φ̃ = (φ₁, φ₂) at one
/// point; `dj_du` is ∂φⱼ/∂u and `dj_dv` is ∂φⱼ/∂v.
#[derive(Debug, Clone, Copy)]
pub struct MapJacobian {
    pub d1_du: f64,
    pub d1_dv: f64,
    pub d2_du: f64,
    pub d2_dv: f64,
}

impl MapJacobian {
    pub fn determinant(&self) -> f64 {
        self.d1_du * self.d2_dv - self.d1_dv * self.d2_du
    }
}

/// The lattice integrand J_{ν,ℓ}(u,v): with ℓᶜ the complementary row index
/// (ℓᶜ = 3 − ℓ),
///
/// J = (φ_{ℓᶜ}^{(0,1)} − φ_{ℓᶜ}^{(1,0)})² / det(Dφ̃)² ×
///     { −2 G_ν(‖∂_v φ̃‖) − 2 G_ν(‖∂_u φ̃‖)
///       + G_ν(‖∂_u φ̃ + ∂_v φ̃‖) + G_ν(‖∂_u φ̃ − ∂_v φ̃‖) }.
///
/// The asymptotic lattice target is 2β*θ^{2ν−2}n^{4−2ν}∬J, so the sign of
/// ∬J determines the sign of f̄: J ≤ 0 for ν ∈ (0,1) and J ≥ 0 for
/// ν ∈ [1,2).
pub fn j_integrand(jac: &MapJacobian, ell: usize, nu: f64) -> Result<f64, TargetError> {
    if ell != 1 && ell != 2 {
        return Err(TargetError::BadOrder(ell));
    }
    if !(nu > 0.0 && nu < 2.0) {
        return Err(TargetError::OutsideDomain { nu, lo: 0.0, hi: 2.0 });
    }
    let det = jac.determinant();
    let scale = jac
        .d1_du
        .abs()
        .max(jac.d1_dv.abs())
        .max(jac.d2_du.abs())
        .max(jac.d2_dv.abs());
    if det.abs() <= 1e-14 * scale * scale {
        return Err(TargetError::SingularMap);
    }
    let du = [jac.d1_du, jac.d2_du];
    let dv = [jac.d1_dv, jac.d2_dv];
    let numerator = if ell == 1 {
        (jac.d2_dv - jac.d2_du).powi(2)
    } else {
        (jac.d1_dv - jac.d1_du).powi(2)
    };
    let norm = |x: [f64; 2]| x[0].hypot(x[1]);
    let bracket = -2.0 * g_nu(norm(dv), nu)? - 2.0 * g_nu(norm(du), nu)?
        + g_nu(norm([du[0] + dv[0], du[1] + dv[1]]), nu)?
        + g_nu(norm([du[0] - dv[0], du[1] - dv[1]]), nu)?;
    Ok(numerator / (det * det) * bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{curve_sites, lattice_sites, line_sites, CurveDesign, LineTransect};
    use approx::assert_relative_eq;

    const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

    fn exp1_transect(n: usize) -> LineTransect {
        line_sites(|s| s * (s + 1.0) / 2.0, n).unwrap()
    }

    fn exp2_curve(n: usize) -> CurveDesign {
        curve_sites(
            |t| [t.cos(), t.sin()],
            |s| s * (s + 1.0) / (FRAC_PI_2 + 1.0),
            FRAC_PI_2,
            n,
        )
        .unwrap()
    }

    fn complex_square_jacobian(u: f64, v: f64) -> MapJacobian {
        MapJacobian {
            d1_du: (2.0 * u + 1.0) / 3.0,
            d1_dv: -2.0 * v / 3.0,
            d2_du: 2.0 * v / 3.0,
            d2_dv: (2.0 * u + 1.0) / 3.0,
        }
    }

    /// Brute-force f over a transect with coefficient weights recomputed by
    /// plain products, written independently of the production path.
    fn f_line_brute(design: &LineTransect, theta: usize, ell: usize, nu: f64) -> f64 {
        let t = design.sites();
        let n = t.len();
        let mut total = 0.0;
        for i in 0..(n - theta * ell) {
            let coords: Vec<f64> = (0..=ell).map(|k| t[i + theta * k]).collect();
            let mut w = vec![0.0; ell + 1];
            for k in 0..=ell {
                let mut prod = 1.0;
                for j in 0..=ell {
                    if j != k {
                        prod *= coords[k] - coords[j];
                    }
                }
                let fact: f64 = (1..=ell).map(|v| v as f64).product();
                w[k] = fact / prod;
            }
            for k1 in 0..ell {
                for k2 in (k1 + 1)..=ell {
                    let gap = coords[k2] - coords[k1];
                    let g = match integer_nu(nu) {
                        Some(p) => gap.powi(2 * p as i32) * gap.ln(),
                        None => gap.powf(2.0 * nu),
                    };
                    total += 2.0 * w[k1] * w[k2] * g;
                }
            }
        }
        total
    }

    #[test]
    fn f_line_matches_brute_force() {
        for n in [20usize, 57] {
            let t = exp1_transect(n);
            for theta in [1usize, 2] {
                for ell in [1usize, 2, 3, 4] {
                    for &nu in &[0.3, 0.5, 1.0, 1.5, ell as f64 - 0.25] {
                        if nu <= 0.0 || nu >= ell as f64 {
                            continue;
                        }
                        let got = f_line(&t, theta, ell, nu).unwrap();
                        let want = f_line_brute(&t, theta, ell, nu);
                        assert_relative_eq!(got, want, max_relative = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn f_line_equispaced_reduces_to_h_factor() {
        // With spacing h, every row contributes identically and
        // f = 2(n−θℓ)(θh)^{2ν−2ℓ} H_ℓ(ν), including at integer ν where the
        // log(θh) cross terms are annihilated. n−1 is a power of two so the
        // site arithmetic is exact.
        let n = 65;
        let h = 1.0 / 64.0;
        let t = line_sites(|s| s, n).unwrap();
        for theta in [1usize, 2] {
            for ell in [1usize, 2, 3] {
                for &nu in &[0.4, 1.0, 1.7, 2.5] {
                    if nu >= ell as f64 {
                        continue;
                    }
                    let rows = (n - theta * ell) as f64;
                    let th = theta as f64 * h;
                    let want = 2.0 * rows
                        * th.powf(2.0 * nu - 2.0 * ell as f64)
                        * h_ell(ell, nu).unwrap();
                    let got = f_line(&t, theta, ell, nu).unwrap();
                    assert_relative_eq!(got, want, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn f_line_rejects_domain_edges() {
        let t = exp1_transect(12);
        assert!(f_line(&t, 1, 2, 0.0).is_err());
        assert!(f_line(&t, 1, 2, 2.0).is_err());
        assert!(f_line(&t, 1, 2, -0.5).is_err());
        assert!(f_line(&t, 1, 2, 1.999).is_ok());
    }

    #[test]
    fn f_curve_on_straight_design_equals_f_line() {
        let t = exp1_transect(40);
        let c = CurveDesign::from_points(t.sites().iter().map(|&x| [x, 0.0]).collect())
            .unwrap();
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                for &nu in &[0.25, 0.8, 1.0, 1.6] {
                    if nu >= ell as f64 {
                        continue;
                    }
                    let fl = f_line(&t, theta, ell, nu).unwrap();
                    let fc = f_curve(&c, theta, ell, nu).unwrap();
                    assert_relative_eq!(fc, fl, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn f_line_growth_rate_in_n() {
        // |f| ≍ n^{2ℓ+1−2ν}: log-log slope across n ∈ {100, 200, 400}.
        for (ell, nu) in [(1usize, 0.5), (2usize, 1.3)] {
            let f100 = f_line(&exp1_transect(100), 1, ell, nu).unwrap().abs();
            let f400 = f_line(&exp1_transect(400), 1, ell, nu).unwrap().abs();
            let slope = (f400.ln() - f100.ln()) / (400.0f64 / 100.0).ln();
            let want = 2.0 * ell as f64 + 1.0 - 2.0 * nu;
            assert!(
                (slope - want).abs() <= 0.15,
                "line growth slope {slope} differs from {want}"
            );
        }
    }

    #[test]
    fn f_curve_growth_rate_in_n() {
        for (ell, nu) in [(1usize, 0.5), (2usize, 1.5)] {
            let f100 = f_curve(&exp2_curve(100), 1, ell, nu).unwrap().abs();
            let f400 = f_curve(&exp2_curve(400), 1, ell, nu).unwrap().abs();
            let slope = (f400.ln() - f100.ln()) / 4.0f64.ln();
            let want = 2.0 * ell as f64 + 1.0 - 2.0 * nu;
            assert!(
                (slope - want).abs() <= 0.15,
                "curve growth slope {slope} differs from {want}"
            );
        }
    }

    #[test]
    fn f_lattice_growth_rate_in_n() {
        for &nu in &[0.5, 1.5] {
            let d100 = lattice_sites(|u, v| [u, v], 100).unwrap();
            let d400 = lattice_sites(|u, v| [u, v], 400).unwrap();
            let f100 = f_lattice(&d100, 1, 1, nu).unwrap().abs();
            let f400 = f_lattice(&d400, 1, 1, nu).unwrap().abs();
            let slope = (f400.ln() - f100.ln()) / 4.0f64.ln();
            let want = 4.0 - 2.0 * nu;
            assert!(
                (slope - want).abs() <= 0.15,
                "lattice growth slope {slope} differs from {want}"
            );
        }
    }

    #[test]
    fn f_curve_leading_constant_on_the_arc() {
        // f̃/(n^{5−2ν} ∫₀^L ‖(γ∘φ)′‖^{2ν−4}) → 2(2^{2ν}−4) θ^{2ν−4} L^{2ν−5}
        // for ℓ = 2; the curve has unit speed so ‖(γ∘φ)′(s)‖ = φ′(s).
        let nu = 0.5;
        let n = 400;
        let l = FRAC_PI_2;
        let c = exp2_curve(n);
        let steps = 20000;
        let mut integral = 0.0;
        for k in 0..steps {
            let s = l * (k as f64 + 0.5) / steps as f64;
            let slope = (2.0 * s + 1.0) / (l + 1.0);
            integral += slope.powf(2.0 * nu - 4.0) * l / steps as f64;
        }
        for theta in [1usize, 2] {
            let got = f_curve(&c, theta, 2, nu).unwrap()
                / ((n as f64).powf(5.0 - 2.0 * nu) * integral);
            let want = 2.0 * (2.0f64.powf(2.0 * nu) - 4.0)
                * (theta as f64).powf(2.0 * nu - 4.0)
                * l.powf(2.0 * nu - 5.0);
            assert!(
                (got / want - 1.0).abs() <= 0.05,
                "curve constant off by {:.2}% (θ={theta})",
                100.0 * (got / want - 1.0).abs()
            );
        }
    }

    #[test]
    fn f_lattice_matches_j_quadrature_on_identity_map() {
        // f̄ ≈ 2 θ^{2ν−2} n^{4−2ν} ∬J; for the identity map J is the
        // constant 2^{ν+1} − 4 and the only deviation is the boundary
        // deficit (n−θ)²/n², which must sit inside the 5% tolerance.
        let nu = 0.5;
        let n = 120;
        let d = lattice_sites(|u, v| [u, v], n).unwrap();
        let jj = 2.0f64.powf(nu + 1.0) - 4.0;
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                let got = f_lattice(&d, theta, ell, nu).unwrap();
                let want = 2.0
                    * (theta as f64).powf(2.0 * nu - 2.0)
                    * (n as f64).powf(4.0 - 2.0 * nu)
                    * jj;
                assert!(
                    (got / want - 1.0).abs() <= 0.05,
                    "lattice constant off (θ={theta}, ℓ={ell}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn f_lattice_matches_j_quadrature_on_deformed_map() {
        // Midpoint quadrature of J on a 200×200 grid against f̄ for the
        // complex square map.
        let nu = 0.7;
        let n = 100;
        let map = |u: f64, v: f64| [(u * u - v * v + u) / 3.0, (2.0 * u * v + v) / 3.0];
        let d = lattice_sites(map, n).unwrap();
        let grid = 200;
        let mut jj = 0.0;
        for a in 0..grid {
            for b in 0..grid {
                let u = (a as f64 + 0.5) / grid as f64;
                let v = (b as f64 + 0.5) / grid as f64;
                jj += j_integrand(&complex_square_jacobian(u, v), 1, nu).unwrap();
            }
        }
        jj /= (grid * grid) as f64;
        let got = f_lattice(&d, 1, 1, nu).unwrap();
        let want = 2.0 * (n as f64).powf(4.0 - 2.0 * nu) * jj;
        assert!(
            (got / want - 1.0).abs() <= 0.05,
            "deformed lattice constant: {got} vs {want}"
        );
    }

    #[test]
    fn f_lattice_sign_tracks_nu() {
        let d = lattice_sites(|u, v| [u, v], 20).unwrap();
        for ell in [1usize, 2] {
            for &nu in &[0.3, 0.5, 0.9] {
                assert!(f_lattice(&d, 1, ell, nu).unwrap() <= 0.0, "ν={nu} should be ≤ 0");
            }
            for &nu in &[1.2, 1.5, 1.9] {
                assert!(f_lattice(&d, 1, ell, nu).unwrap() >= 0.0, "ν={nu} should be ≥ 0");
            }
        }
    }

    #[test]
    fn h_ell_closed_forms() {
        for &nu in &[0.2, 0.5, 0.75] {
            assert_relative_eq!(h_ell(1, nu).unwrap(), -1.0, max_relative = 1e-14);
        }
        for &nu in &[0.3, 0.9, 1.5, 1.99] {
            assert_relative_eq!(
                h_ell(2, nu).unwrap(),
                2.0f64.powf(2.0 * nu) - 4.0,
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(
            h_ell(2, 1.0).unwrap(),
            4.0 * 2.0f64.ln(),
            max_relative = 1e-14
        );
        assert!(h_ell(2, 0.0).is_err());
        assert!(h_ell(2, 2.5).is_err());
        assert!(h_ell(11, 0.5).is_err());
    }

    #[test]
    fn h_scan_passes_for_usable_orders() {
        let s = h_ell_nonzero_scan(1, 0.9).unwrap();
        assert_relative_eq!(s.min_abs, 1.0, max_relative = 1e-12);
        let s = h_ell_nonzero_scan(2, 1.9).unwrap();
        assert!(s.min_abs > 0.0);
        // Near ν = 1, |H₂| dips towards 4·log 2 territory but never 0; the
        // minimum over (0, 1.9] sits at the left edge where 2^{2ν} → 1.
        assert!(s.min_at < 0.1 || (s.min_at - 1.0).abs() < 0.3, "min at {}", s.min_at);
        assert!(h_ell_nonzero_scan(2, 0.0005).is_err());
    }

    #[test]
    fn j_integrand_identity_map_values() {
        let id = MapJacobian { d1_du: 1.0, d1_dv: 0.0, d2_du: 0.0, d2_dv: 1.0 };
        assert_relative_eq!(
            j_integrand(&id, 1, 0.5).unwrap(),
            2.0f64.powf(1.5) - 4.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            j_integrand(&id, 1, 1.5).unwrap(),
            2.0f64.powf(2.5) - 4.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            j_integrand(&id, 1, 1.0).unwrap(),
            2.0 * 2.0f64.ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            j_integrand(&id, 2, 0.5).unwrap(),
            j_integrand(&id, 1, 0.5).unwrap(),
            max_relative = 1e-14
        );
        let singular = MapJacobian { d1_du: 1.0, d1_dv: 2.0, d2_du: 0.5, d2_dv: 1.0 };
        assert!(matches!(j_integrand(&singular, 1, 0.5), Err(TargetError::SingularMap)));
    }

    #[test]
    fn j_integrand_sign_law_on_the_deformed_map() {
        for ell in [1usize, 2] {
            for a in 0..20 {
                for b in 0..20 {
                    let u = (a as f64 + 0.5) / 20.0;
                    let v = (b as f64 + 0.5) / 20.0;
                    let jac = complex_square_jacobian(u, v);
                    let neg = j_integrand(&jac, ell, 0.5).unwrap();
                    let pos = j_integrand(&jac, ell, 1.5).unwrap();
                    assert!(neg <= 1e-12, "J(0.5) = {neg} at ({u}, {v})");
                    assert!(pos >= -1e-12, "J(1.5) = {pos} at ({u}, {v})");
                }
            }
        }
    }

    #[test]
    fn ratio_tracks_the_asymptote() {
        let t = exp1_transect(200);
        for ell in [1usize, 2] {
            let target = RatioTarget::line(&t, ell, ell as f64).unwrap();
            let mut nu_star = 0.0;
            while nu_star <= target.cap() + 1e-12 {
                let f = target.eval(nu_star).unwrap();
                let want = 2.0f64.powf(2.0 * nu_star - 2.0 * ell as f64);
                assert!(
                    (f - want).abs() <= 0.05,
                    "line F({nu_star}) = {f}, asymptote {want} (ℓ={ell})"
                );
                nu_star += 0.25;
            }
        }
        let d = lattice_sites(|u, v| [u, v], 40).unwrap();
        for ell in [1usize, 2] {
            let target = RatioTarget::lattice(&d, ell).unwrap();
            let mut nu_star = 0.0;
            while nu_star <= 2.0 + 1e-12 {
                let f = target.eval(nu_star).unwrap();
                let want = 2.0f64.powf(2.0 * nu_star - 2.0);
                assert!(
                    (f - want).abs() <= 0.05,
                    "lattice F({nu_star}) = {f}, asymptote {want} (ℓ={ell})"
                );
                nu_star += 0.25;
            }
        }
    }

    #[test]
    fn ratio_is_continuous_at_integer_junctions() {
        // Families whose rows annihilate the interior integer powers
        // exactly at finite n: transects, lattices, straight curves. The
        // domain endpoints 0 and cap are checked for all of them.
        let eps = 1e-6;
        let tol = 1e-3;

        let t = exp1_transect(200);
        let target = RatioTarget::line(&t, 2, 2.0).unwrap();
        for junction in [0.0, 1.0, 2.0] {
            let at = target.eval(junction).unwrap();
            if junction > 0.0 {
                assert!(
                    (target.eval(junction - eps).unwrap() - at).abs() <= tol,
                    "line left limit at {junction}"
                );
            }
            if junction < 2.0 {
                assert!(
                    (target.eval(junction + eps).unwrap() - at).abs() <= tol,
                    "line right limit at {junction}"
                );
            }
        }

        let straight =
            CurveDesign::from_points(t.sites().iter().map(|&x| [x, 0.0]).collect()).unwrap();
        let target = RatioTarget::curve(&straight, 2).unwrap();
        for junction in [0.0, 1.0, 2.0] {
            let at = target.eval(junction).unwrap();
            if junction > 0.0 {
                assert!((target.eval(junction - eps).unwrap() - at).abs() <= tol);
            }
            if junction < 2.0 {
                assert!((target.eval(junction + eps).unwrap() - at).abs() <= tol);
            }
        }

        let d = lattice_sites(|u, v| [u, v], 40).unwrap();
        let target = RatioTarget::lattice(&d, 1).unwrap();
        for junction in [0.0, 1.0, 2.0] {
            let at = target.eval(junction).unwrap();
            if junction > 0.0 {
                assert!(
                    (target.eval(junction - eps).unwrap() - at).abs() <= tol,
                    "lattice left limit at {junction}"
                );
            }
            if junction < 2.0 {
                assert!(
                    (target.eval(junction + eps).unwrap() - at).abs() <= tol,
                    "lattice right limit at {junction}"
                );
            }
        }
    }

    #[test]
    fn curved_designs_keep_endpoint_continuity() {
        // On genuinely curved designs the interior integer junction is
        // distorted at finite n (the chord rows only annihilate s² up to a
        // curvature defect), but both domain endpoints stay continuous.
        let c = exp2_curve(200);
        let target = RatioTarget::curve(&c, 2).unwrap();
        let eps = 1e-6;
        assert!((target.eval(eps).unwrap() - target.eval(0.0).unwrap()).abs() <= 1e-3);
        assert!((target.eval(2.0 - eps).unwrap() - target.eval(2.0).unwrap()).abs() <= 1e-3);
        // The ν* = 2 endpoint value itself sits near the asymptote 2⁰ = 1.
        assert!((target.eval(2.0).unwrap() - 1.0).abs() <= 0.05);
    }

    #[test]
    fn ratio_rejects_out_of_domain_points() {
        let t = exp1_transect(30);
        let target = RatioTarget::line(&t, 2, 1.3).unwrap();
        assert_relative_eq!(target.cap(), 1.3);
        assert!(target.eval(1.3).is_ok());
        assert!(target.eval(1.300001).is_err());
        assert!(target.eval(-0.1).is_err());
        assert!(target.eval(f64::NAN).is_err());
    }

    #[test]
    fn ratio_domain_cap_folds_to_order() {
        let t = exp1_transect(30);
        let target = RatioTarget::line(&t, 1, 2.5).unwrap();
        assert_relative_eq!(target.cap(), 1.0);
        assert!(target.eval(1.0).is_ok());
    }
}
