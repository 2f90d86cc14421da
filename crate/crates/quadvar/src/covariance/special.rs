//! Gamma and modified Bessel functions needed by the Matérn covariance.
//!
//! Only what the crate needs is implemented: Γ(x) for real x, and K_ν(x) for
//! real order ν ≥ 0. Both are classical algorithms:
//!
//! * Γ via the Lanczos approximation with g = 10.900511 and the 11-term
//!   coefficient set from Pugh's thesis (the same data set used by several
//!   Rust statistics crates), giving close to full double precision.
//! * K_ν via Temme's power series for x ≤ 2 and the Thompson–Barnett
//!   continued fraction for x > 2, evaluated at the fractional order
//!   μ ∈ [−1/2, 1/2] and walked up to ν with the standard upward recurrence
//!   K_{m+1}(x) = K_{m−1}(x) + (2m/x)·K_m(x), which is stable because K grows
//!   with the order.

use std::f64::consts::PI;

/// Lanczos coefficients for g = 10.900511 (Pugh 2004).
const LANCZOS_DK: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210e0,
    -3.45687097222016235469e0,
    4.51227709466894823700e0,
    -2.98285225323576655721e0,
    1.05639711577126713077e0,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];

const LANCZOS_G: f64 = 10.900511;
const TWO_SQRT_E_OVER_PI: f64 = 1.8603827342052657;

/// Gamma function for real arguments (poles at 0, −1, −2, … return NaN).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x) = π / (sin(πx) · Γ(1−x)).
        let s: f64 = LANCZOS_DK
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_DK[0], |acc, (k, dk)| acc + dk / (k as f64 - x));
        PI / ((PI * x).sin()
            * s
            * TWO_SQRT_E_OVER_PI
            * ((0.5 - x + LANCZOS_G) / std::f64::consts::E).powf(0.5 - x))
    } else {
        let s: f64 = LANCZOS_DK
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_DK[0], |acc, (k, dk)| acc + dk / (x + k as f64 - 1.0));
        s * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_G) / std::f64::consts::E).powf(x - 0.5)
    }
}

/// Reciprocal gamma 1/Γ(1+z) for |z| ≤ 0.5, free of the pole bookkeeping.
fn recip_gamma_1p(z: f64) -> f64 {
    1.0 / gamma(1.0 + z)
}

/// Taylor coefficients of 1/Γ(1+z) = Σ a_k z^k (a_k = c_{k+1} of the classical
/// 1/Γ(z) = Σ c_k z^k table, Abramowitz & Stegun 6.1.34).
const RECIP_GAMMA_A: [f64; 15] = [
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.04200263503409523553,
    0.16653861138229148950,
    -0.04219773455554433675,
    -0.00962197152787697356,
    0.00721894324666309954,
    -0.00116516759185906511,
    -0.00021524167411495097,
    0.00012805028238811619,
    -0.00002013485478078824,
    -0.00000125049348214267,
    0.00000113302723198170,
    -0.00000020563384169776,
];

/// Temme's auxiliary pair:
/// Γ1(μ) = [1/Γ(1−μ) − 1/Γ(1+μ)]/(2μ) and Γ2(μ) = [1/Γ(1−μ) + 1/Γ(1+μ)]/2,
/// plus the reciprocals 1/Γ(1+μ) and 1/Γ(1−μ) themselves.
///
/// Γ1 is a difference of nearly equal quantities as μ → 0, so for small μ it
/// is evaluated from the odd part of the Taylor series of 1/Γ(1+z), which has
/// no cancellation.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    debug_assert!(mu.abs() <= 0.5);
    let gampl = recip_gamma_1p(mu);
    let gammi = recip_gamma_1p(-mu);
    let gam1 = if mu.abs() < 0.1 {
        let mu2 = mu * mu;
        // −(a1 + a3 μ² + a5 μ⁴ + …)
        let mut acc = 0.0;
        for k in (1..RECIP_GAMMA_A.len()).rev().filter(|k| k % 2 == 1) {
            acc = acc * mu2 + RECIP_GAMMA_A[k];
        }
        -acc
    } else {
        (gammi - gampl) / (2.0 * mu)
    };
    let gam2 = (gammi + gampl) / 2.0;
    (gam1, gam2, gampl, gammi)
}

const BESSEL_EPS: f64 = 1.0e-16;
const BESSEL_MAX_ITER: usize = 40_000;

/// Modified Bessel function of the second kind K_ν(x) for ν ≥ 0, x > 0.
///
/// Returns `None` when the iteration fails to converge (does not happen for
/// the supported range; kept so callers surface a real error instead of a
/// silent wrong value). Underflows to 0.0 for large x, as the true value does.
pub fn bessel_k(nu: f64, x: f64) -> Option<f64> {
    debug_assert!(nu >= 0.0 && x > 0.0);
    // Split ν = μ + nl with μ ∈ [−1/2, 1/2].
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let nl = nl as usize;

    let (mut k_mu, mut k_mu1) = if x <= 2.0 {
        temme_series(mu, x)?
    } else {
        steed_cf2(mu, x)?
    };

    // Upward recurrence in the order: K_{m+1} = K_{m−1} + (2m/x)·K_m.
    for j in 1..=nl {
        let next = k_mu + (2.0 * (mu + j as f64) / x) * k_mu1;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    Some(k_mu)
}

/// Temme's series for K_μ(x), K_{μ+1}(x); |μ| ≤ 1/2, 0 < x ≤ 2.
fn temme_series(mu: f64, x: f64) -> Option<(f64, f64)> {
    let x2 = 0.5 * x;
    let mu2 = mu * mu;
    let pimu = PI * mu;
    let fact = if pimu.abs() < 1e-30 { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-30 { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);

    // f_0, p_0, q_0 of the recursion.
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d = x2 * x2;
    let mut sum1 = p;
    for i in 1..=BESSEL_MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * BESSEL_EPS {
            return Some((sum, sum1 * 2.0 / x));
        }
    }
    None
}

/// Thompson–Barnett continued fraction (CF2) for K_μ(x), K_{μ+1}(x);
/// |μ| ≤ 1/2, x > 2.
fn steed_cf2(mu: f64, x: f64) -> Option<(f64, f64)> {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=BESSEL_MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < BESSEL_EPS {
            let h = a1 * h;
            let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
            let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
            return Some((k_mu, k_mu1));
        }
    }
    None
}
