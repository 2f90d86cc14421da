//! Divided-difference coefficient families and quadratic-variation
//! statistics.
//!
//! For a transect with sites tᵢ the order-ℓ, dilation-θ weights are
//!
//! a_{θ,ℓ;i,k} = ℓ! / ∏_{j≠k} (t_{i+θk} − t_{i+θj}),     k = 0..ℓ,
//!
//! so that ∇_{θ,ℓ}Xᵢ = Σₖ a_{θ,ℓ;i,k} X_{i+θk} annihilates polynomials of
//! degree < ℓ and maps tᵠ to ℓ! at q = ℓ. Curve designs replace sites by
//! chord distances d_{i,i+θk} from the base point (with d_{i,i} = 0) and the
//! numerator ℓ! by ℓ. Lattice designs use four cross-difference weights per
//! cell built from two 2×2 matrix inversions; those rows annihilate
//! constants and both coordinate functions.
//!
//! The statistics are plain sums of squared increments,
//! V_{θ,ℓ} = Σᵢ (∇_{θ,ℓ}Xᵢ)², accumulated by a fixed pairwise tree so the
//! result never depends on evaluation order.

use crate::designs::{CurveDesign, LatticeDesign, LineTransect};
use thiserror::Error;

/// Largest supported divided-difference order on transects.
pub const MAX_LINE_ORDER: usize = 10;

#[derive(Debug, Error)]
pub enum QvarError {
    #[error("dilation theta must be 1 or 2, got {0}")]
    BadTheta(usize),
    #[error("order ell must lie in 1..={max}, got {ell}")]
    BadOrder { ell: usize, max: usize },
    #[error("row index {i} outside 1..={max}")]
    RowOutOfRange { i: usize, max: usize },
    #[error("observation count {got} does not match design size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coincident chord distances in row {i}: offsets {k} and {j}")]
    CoincidentChords { i: usize, k: usize, j: usize },
    #[error("degenerate lattice cell at ({i1}, {i2}): difference matrix is singular")]
    DegenerateCell { i1: usize, i2: usize },
}

/// One row of increment weights.
///
/// For line and curve designs `weights` holds the ℓ+1 values indexed by
/// k = 0..ℓ and `base_index` is `[i, 0]` (1-based). For lattice designs
/// `weights` holds 4 values for the cell corners (k₁,k₂) in the order
/// (0,0), (1,0), (0,1), (1,1), meaning grid node (i₁+k₁θ, i₂+k₂θ), and
/// `base_index` is `[i₁, i₂]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub theta: usize,
    pub ell: usize,
    pub base_index: [usize; 2],
    pub weights: Vec<f64>,
}

/// Summary of one quadratic-variation statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationStatistic {
    pub theta: usize,
    pub ell: usize,
    /// Σ (increment)², nonnegative.
    pub value: f64,
    /// Number of squared increments: n − θℓ on transects and curves,
    /// (n − θ)² on lattices.
    pub term_count: usize,
}

fn check_theta(theta: usize) -> Result<(), QvarError> {
    if theta == 1 || theta == 2 {
        Ok(())
    } else {
        Err(QvarError::BadTheta(theta))
    }
}

fn check_order(ell: usize, max: usize) -> Result<(), QvarError> {
    if (1..=max).contains(&ell) {
        Ok(())
    } else {
        Err(QvarError::BadOrder { ell, max })
    }
}

/// Weights numerator / ∏_{j≠k}(s_k − s_j) for the coordinates s_0..s_ℓ.
///
/// The plain quotient is used whenever it stays in normal f64 range: on the
/// dyadic geometries of the bit-stability tests every operation here is then
/// exact, so weight rows sum to zero without rounding residue. A row whose
/// gap product overflows or underflows (possible in principle for extreme
/// designs, since ℓ gaps of size ~1/n multiply down to n^{−ℓ}) falls back to
/// the log-magnitude + sign form.
fn reciprocal_product_weights(
    coords: &[f64],
    numerator: f64,
    row: usize,
) -> Result<Vec<f64>, QvarError> {
    let mut weights = Vec::with_capacity(coords.len());
    for (k, &sk) in coords.iter().enumerate() {
        let mut product = 1.0f64;
        for (j, &sj) in coords.iter().enumerate() {
            if j == k {
                continue;
            }
            let diff = sk - sj;
            if diff == 0.0 {
                return Err(QvarError::CoincidentChords { i: row, k, j });
            }
            product *= diff;
        }
        let w = numerator / product;
        if w.is_finite() && w != 0.0 {
            weights.push(w);
            continue;
        }
        let mut ln_mag = numerator.ln();
        let mut sign = 1.0f64;
        for (j, &sj) in coords.iter().enumerate() {
            if j == k {
                continue;
            }
            let diff = sk - sj;
            ln_mag -= diff.abs().ln();
            sign *= diff.signum();
        }
        weights.push(sign * ln_mag.exp());
    }
    Ok(weights)
}

fn factorial(ell: usize) -> f64 {
    (2..=ell).map(|v| v as u64).product::<u64>() as f64
}

/// Transect weights a_{θ,ℓ;i,k}, row index i 1-based with
/// 1 ≤ i ≤ n − θℓ.
pub fn a_coefficients(
    design: &LineTransect,
    theta: usize,
    ell: usize,
    i: usize,
) -> Result<CoefficientRow, QvarError> {
    check_theta(theta)?;
    check_order(ell, MAX_LINE_ORDER)?;
    let n = design.n();
    if theta * ell >= n || i == 0 || i > n - theta * ell {
        return Err(QvarError::RowOutOfRange { i, max: n.saturating_sub(theta * ell) });
    }
    let coords: Vec<f64> =
        (0..=ell).map(|k| design.sites()[i - 1 + theta * k]).collect();
    let weights = reciprocal_product_weights(&coords, factorial(ell), i)?;
    Ok(CoefficientRow { theta, ell, base_index: [i, 0], weights })
}

/// Curve weights b_{θ,ℓ;i,k} from the chord distances d_{i,i+θk}; the
/// numerator is ℓ rather than ℓ!.
pub fn b_coefficients(
    design: &CurveDesign,
    theta: usize,
    ell: usize,
    i: usize,
) -> Result<CoefficientRow, QvarError> {
    check_theta(theta)?;
    check_order(ell, 2)?;
    let n = design.n();
    if theta * ell >= n || i == 0 || i > n - theta * ell {
        return Err(QvarError::RowOutOfRange { i, max: n.saturating_sub(theta * ell) });
    }
    let coords: Vec<f64> = (0..=ell).map(|k| design.chord(i - 1, i - 1 + theta * k)).collect();
    let weights = reciprocal_product_weights(&coords, ell as f64, i)?;
    Ok(CoefficientRow { theta, ell, base_index: [i, 0], weights })
}

/// Relative determinant floor below which a lattice cell counts as
/// degenerate.
const CELL_DET_FLOOR: f64 = 1e-14;

/// Row ℓ of the inverse of [[m00, m01], [m10, m11]].
fn inverse_row(
    m: [[f64; 2]; 2],
    ell: usize,
    i1: usize,
    i2: usize,
) -> Result<[f64; 2], QvarError> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if det.abs() <= CELL_DET_FLOOR * scale * scale {
        return Err(QvarError::DegenerateCell { i1, i2 });
    }
    Ok(match ell {
        1 => [m[1][1] / det, -m[0][1] / det],
        _ => [-m[1][0] / det, m[0][0] / det],
    })
}

/// Lattice cell weights c^{k₁,k₂}_{θ,ℓ;i₁,i₂}, cell indices 1-based with
/// 1 ≤ i₁, i₂ ≤ n − θ.
///
/// The weights combine row ℓ of the inverses of the forward-difference
/// matrix A (rows x^{i₁+θ,i₂} − x^{i₁,i₂} and x^{i₁,i₂+θ} − x^{i₁,i₂}) and
/// the backward-difference matrix B (rows x^{i₁+θ,i₂} − x^{i₁+θ,i₂+θ} and
/// x^{i₁,i₂+θ} − x^{i₁+θ,i₂+θ}); with α and β those rows, the corner
/// weights are (α₁+α₂, β₁−α₁, β₂−α₂, −β₁−β₂).
pub fn c_coefficients(
    design: &LatticeDesign,
    theta: usize,
    ell: usize,
    i1: usize,
    i2: usize,
) -> Result<CoefficientRow, QvarError> {
    check_theta(theta)?;
    check_order(ell, 2)?;
    let n = design.side();
    let max = n.saturating_sub(theta);
    if i1 == 0 || i2 == 0 || i1 > max || i2 > max {
        return Err(QvarError::RowOutOfRange { i: if i1 == 0 || i1 > max { i1 } else { i2 }, max });
    }
    let x00 = design.point(i1, i2);
    let x10 = design.point(i1 + theta, i2);
    let x01 = design.point(i1, i2 + theta);
    let x11 = design.point(i1 + theta, i2 + theta);

    let a = [
        [x10[0] - x00[0], x10[1] - x00[1]],
        [x01[0] - x00[0], x01[1] - x00[1]],
    ];
    let b = [
        [x10[0] - x11[0], x10[1] - x11[1]],
        [x01[0] - x11[0], x01[1] - x11[1]],
    ];
    let alpha = inverse_row(a, ell, i1, i2)?;
    let beta = inverse_row(b, ell, i1, i2)?;
    let weights = vec![
        alpha[0] + alpha[1],
        beta[0] - alpha[0],
        beta[1] - alpha[1],
        -beta[0] - beta[1],
    ];
    Ok(CoefficientRow { theta, ell, base_index: [i1, i2], weights })
}

/// Sums values over a fixed pairwise tree. The reduction order depends only
/// on the length, never on chunking or thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// V_{θ,ℓ} = Σᵢ (Σₖ a_{θ,ℓ;i,k} X_{i+θk})² over rows i = 1..n−θℓ.
pub fn variation_line(
    obs: &[f64],
    design: &LineTransect,
    theta: usize,
    ell: usize,
) -> Result<VariationStatistic, QvarError> {
    check_theta(theta)?;
    check_order(ell, MAX_LINE_ORDER)?;
    let n = design.n();
    if obs.len() != n {
        return Err(QvarError::LengthMismatch { expected: n, got: obs.len() });
    }
    if theta * ell >= n {
        return Err(QvarError::BadOrder { ell, max: (n - 1) / theta });
    }
    let rows = n - theta * ell;
    let mut squares = Vec::with_capacity(rows);
    for i in 1..=rows {
        let row = a_coefficients(design, theta, ell, i)?;
        let inc: f64 = row
            .weights
            .iter()
            .enumerate()
            .map(|(k, &w)| w * obs[i - 1 + theta * k])
            .sum();
        squares.push(inc * inc);
    }
    Ok(VariationStatistic { theta, ell, value: pairwise_sum(&squares), term_count: rows })
}

/// Curve analogue of [`variation_line`] with b-weights.
pub fn variation_curve(
    obs: &[f64],
    design: &CurveDesign,
    theta: usize,
    ell: usize,
) -> Result<VariationStatistic, QvarError> {
    check_theta(theta)?;
    check_order(ell, 2)?;
    let n = design.n();
    if obs.len() != n {
        return Err(QvarError::LengthMismatch { expected: n, got: obs.len() });
    }
    if theta * ell >= n {
        return Err(QvarError::BadOrder { ell, max: (n - 1) / theta });
    }
    let rows = n - theta * ell;
    let mut squares = Vec::with_capacity(rows);
    for i in 1..=rows {
        let row = b_coefficients(design, theta, ell, i)?;
        let inc: f64 = row
            .weights
            .iter()
            .enumerate()
            .map(|(k, &w)| w * obs[i - 1 + theta * k])
            .sum();
        squares.push(inc * inc);
    }
    Ok(VariationStatistic { theta, ell, value: pairwise_sum(&squares), term_count: rows })
}

/// V̄_{θ,ℓ} = Σ_{i₁,i₂} (Σ c^{k₁,k₂} X_{i₁+k₁θ, i₂+k₂θ})² over all cells
/// 1 ≤ i₁, i₂ ≤ n − θ. Observations are row-major with i₁ slow, matching
/// the lattice point storage.
pub fn variation_lattice(
    obs: &[f64],
    design: &LatticeDesign,
    theta: usize,
    ell: usize,
) -> Result<VariationStatistic, QvarError> {
    check_theta(theta)?;
    check_order(ell, 2)?;
    let n = design.side();
    if obs.len() != n * n {
        return Err(QvarError::LengthMismatch { expected: n * n, got: obs.len() });
    }
    if theta >= n {
        return Err(QvarError::BadTheta(theta));
    }
    let side = n - theta;
    let at = |i1: usize, i2: usize| obs[(i1 - 1) * n + (i2 - 1)];
    let mut squares = Vec::with_capacity(side * side);
    for i1 in 1..=side {
        for i2 in 1..=side {
            let row = c_coefficients(design, theta, ell, i1, i2)?;
            let w = &row.weights;
            let inc = w[0] * at(i1, i2)
                + w[1] * at(i1 + theta, i2)
                + w[2] * at(i1, i2 + theta)
                + w[3] * at(i1 + theta, i2 + theta);
            squares.push(inc * inc);
        }
    }
    Ok(VariationStatistic {
        theta,
        ell,
        value: pairwise_sum(&squares),
        term_count: side * side,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{curve_sites, lattice_sites, line_sites, CurveDesign, LineTransect};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn straight_curve(coords: &[f64]) -> CurveDesign {
        CurveDesign::from_points(coords.iter().map(|&t| [t, 0.0]).collect()).unwrap()
    }

    #[test]
    fn a_weights_small_examples() {
        // sites (0, 0.5), θ=1, ℓ=1: 1/(0−0.5) = −2 and 1/(0.5−0) = 2.
        let t = LineTransect::from_sites(vec![0.0, 0.5, 0.75, 1.0]).unwrap();
        let row = a_coefficients(&t, 1, 1, 1).unwrap();
        assert_relative_eq!(row.weights[0], -2.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[1], 2.0, max_relative = 1e-12);

        // θ=2, ℓ=1 on (0, 0.3, 1): only t₁ and t₃ enter; weights (−1, 1).
        let t = LineTransect::from_sites(vec![0.0, 0.3, 1.0]).unwrap();
        let row = a_coefficients(&t, 2, 1, 1).unwrap();
        assert_relative_eq!(row.weights[0], -1.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[1], 1.0, max_relative = 1e-12);

        // Equispaced second difference on (0, 0.5, 1): 4·(1, −2, 1).
        let t = LineTransect::from_sites(vec![0.0, 0.5, 1.0]).unwrap();
        let row = a_coefficients(&t, 1, 2, 1).unwrap();
        assert_relative_eq!(row.weights[0], 4.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[1], -8.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[2], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn a_row_index_bounds() {
        let t = line_sites(|s| s, 10).unwrap();
        assert!(a_coefficients(&t, 1, 2, 8).is_ok());
        assert!(matches!(
            a_coefficients(&t, 1, 2, 9),
            Err(QvarError::RowOutOfRange { i: 9, max: 8 })
        ));
        assert!(a_coefficients(&t, 1, 2, 0).is_err());
        assert!(matches!(a_coefficients(&t, 3, 1, 1), Err(QvarError::BadTheta(3))));
        assert!(matches!(a_coefficients(&t, 1, 11, 1), Err(QvarError::BadOrder { .. })));
    }

    #[test]
    fn b_weights_small_examples() {
        // Single chord of length 0.5: same algebra as the line case.
        let c = straight_curve(&[0.0, 0.5, 1.0, 1.5, 2.0]);
        let row = b_coefficients(&c, 1, 1, 1).unwrap();
        assert_relative_eq!(row.weights[0], -2.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[1], 2.0, max_relative = 1e-12);

        // Chords (0, 1, 2): 2/((0−1)(0−2)) = 1, 2/((1−0)(1−2)) = −2,
        // 2/((2−0)(2−1)) = 1.
        let c = straight_curve(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let row = b_coefficients(&c, 1, 2, 1).unwrap();
        assert_relative_eq!(row.weights[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[1], -2.0, max_relative = 1e-12);
        assert_relative_eq!(row.weights[2], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn b_matches_a_on_straight_equispaced_curves() {
        // With n−1 a power of two every site and chord difference is exact
        // in f64, so the a and b paths see bit-identical inputs for ℓ ∈
        // {1, 2} (1! = 1, 2! = 2 = ℓ) and must produce bit-identical rows.
        let n = 17;
        let t = line_sites(|s| s, n).unwrap();
        let c = straight_curve(t.sites());
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                for i in 1..=(n - theta * ell) {
                    let a = a_coefficients(&t, theta, ell, i).unwrap();
                    let b = b_coefficients(&c, theta, ell, i).unwrap();
                    assert_eq!(a.weights, b.weights, "θ={theta} ℓ={ell} i={i}");
                }
            }
        }
    }

    #[test]
    fn b_rejects_coincident_chords() {
        // Symmetric points around the base: equal chord distances at offsets
        // 1 and 2 cannot support a divided difference.
        let points = vec![[0.0, 0.0], [1.0, 0.1], [-1.0, 0.1], [2.0, 0.0], [3.0, 0.0]];
        let c = CurveDesign::from_points(points).unwrap();
        assert!(matches!(
            b_coefficients(&c, 1, 2, 1),
            Err(QvarError::CoincidentChords { .. })
        ));
    }

    #[test]
    fn c_weights_identity_map() {
        let n = 6;
        let d = lattice_sites(|u, v| [u, v], n).unwrap();
        for ell in [1usize, 2] {
            for (i1, i2) in [(1, 1), (2, 4), (5, 3)] {
                let row = c_coefficients(&d, 1, ell, i1, i2).unwrap();
                let nf = n as f64;
                assert_relative_eq!(row.weights[0], nf, max_relative = 1e-12);
                assert_relative_eq!(row.weights[1], -nf, max_relative = 1e-12);
                assert_relative_eq!(row.weights[2], -nf, max_relative = 1e-12);
                assert_relative_eq!(row.weights[3], nf, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn c_rows_annihilate_constants_and_planes() {
        // The two plane-annihilation identities: Σc = 0 and Σ c·x_j = 0, on
        // a genuinely deformed lattice. The tolerance needs an absolute
        // floor because rows can vanish identically: for ℓ = 1 this map has
        // φ₂^{(0,1)} = φ₂^{(1,0)} along 2v = 2u + 1, and cells straddling
        // that line get weights at rounding level.
        let map = |u: f64, v: f64| {
            [(u * u - v * v + u) / 3.0, (2.0 * u * v + v) / 3.0]
        };
        let n = 12;
        let d = lattice_sites(map, n).unwrap();
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                for i1 in 1..=(n - theta) {
                    for i2 in 1..=(n - theta) {
                        let row = c_coefficients(&d, theta, ell, i1, i2).unwrap();
                        let scale: f64 = 1e-8
                            * row.weights.iter().map(|w| w.abs()).sum::<f64>()
                            + 1e-12;
                        let sum: f64 = row.weights.iter().sum();
                        assert!(sum.abs() <= scale, "Σc = {sum:e} too large");
                        for axis in 0..2 {
                            let corners = [
                                d.point(i1, i2),
                                d.point(i1 + theta, i2),
                                d.point(i1, i2 + theta),
                                d.point(i1 + theta, i2 + theta),
                            ];
                            let m: f64 = row
                                .weights
                                .iter()
                                .zip(corners.iter())
                                .map(|(w, p)| w * p[axis])
                                .sum();
                            assert!(
                                m.abs() <= scale,
                                "Σ c·x_{axis} = {m:e} too large at ({i1},{i2})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn c_rejects_degenerate_cells() {
        // Collapsing the second coordinate makes A and B singular.
        let points: Vec<[f64; 2]> = (0..9).map(|k| [k as f64, k as f64 * 2.0]).collect();
        let d = crate::designs::LatticeDesign::from_points(3, points).unwrap();
        assert!(matches!(
            c_coefficients(&d, 1, 1, 1, 1),
            Err(QvarError::DegenerateCell { i1: 1, i2: 1 })
        ));
    }

    fn centered_moment(row: &CoefficientRow, coords: &[f64], q: usize) -> f64 {
        // 0⁰ = 1 convention at q = 0.
        let base = coords[0];
        row.weights
            .iter()
            .zip(coords.iter())
            .map(|(&w, &s)| {
                let c = s - base;
                if q == 0 {
                    w
                } else {
                    w * c.powi(q as i32)
                }
            })
            .sum()
    }

    #[test]
    fn a_rows_satisfy_moment_identities() {
        let t = line_sites(|s| s * (s + 1.0) / 2.0, 60).unwrap();
        for theta in [1usize, 2] {
            for ell in 1..=MAX_LINE_ORDER {
                if theta * ell >= t.n() {
                    continue;
                }
                for i in [1, 7, t.n() - theta * ell] {
                    let row = a_coefficients(&t, theta, ell, i).unwrap();
                    let coords: Vec<f64> =
                        (0..=ell).map(|k| t.sites()[i - 1 + theta * k]).collect();
                    for q in 0..ell {
                        let m = centered_moment(&row, &coords, q);
                        let scale: f64 = row
                            .weights
                            .iter()
                            .zip(coords.iter())
                            .map(|(&w, &s)| (w * (s - coords[0]).powi(q as i32)).abs())
                            .sum::<f64>()
                            .max(1.0);
                        assert!(
                            m.abs() <= 1e-8 * scale,
                            "q={q} moment {m:e} not annihilated (θ={theta}, ℓ={ell}, i={i})"
                        );
                    }
                    let lead = centered_moment(&row, &coords, ell);
                    let fact: f64 = (1..=ell).map(|v| v as f64).product();
                    assert_relative_eq!(lead, fact, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn b_rows_satisfy_moment_identities_on_an_arc() {
        let l = std::f64::consts::FRAC_PI_2;
        let c = curve_sites(|t| [t.cos(), t.sin()], |s| s * (s + 1.0) / (l + 1.0), l, 80)
            .unwrap();
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                for i in [1, 10, c.n() - theta * ell] {
                    let row = b_coefficients(&c, theta, ell, i).unwrap();
                    let coords: Vec<f64> =
                        (0..=ell).map(|k| c.chord(i - 1, i - 1 + theta * k)).collect();
                    for q in 0..ell {
                        let m = centered_moment(&row, &coords, q);
                        assert!(m.abs() <= 1e-8, "chord moment q={q} is {m:e}");
                    }
                    assert_relative_eq!(
                        centered_moment(&row, &coords, ell),
                        ell as f64,
                        max_relative = 1e-8
                    );
                }
            }
        }
    }

    #[test]
    fn variation_annihilates_constants() {
        let t = line_sites(|s| s * (s + 1.0) / 2.0, 30).unwrap();
        let obs = vec![3.7; 30];
        for ell in [1usize, 2, 3] {
            let v = variation_line(&obs, &t, 1, ell).unwrap();
            assert!(v.value <= 1e-15, "constant field not annihilated: {:e}", v.value);
            assert_eq!(v.term_count, 30 - ell);
        }
    }

    #[test]
    fn variation_line_reproduces_polynomial_exactness() {
        // X(t) = t²: every order-2 increment equals 2! = 2, so V = 4(n−2).
        let t = line_sites(|s| s * (s + 1.0) / 2.0, 40).unwrap();
        let obs: Vec<f64> = t.sites().iter().map(|&x| x * x).collect();
        let v = variation_line(&obs, &t, 1, 2).unwrap();
        assert_relative_eq!(v.value, 4.0 * 38.0, max_relative = 1e-9);

        // X(t) = t: order-1 increments equal 1, so V = n−1.
        let obs: Vec<f64> = t.sites().to_vec();
        let v = variation_line(&obs, &t, 1, 1).unwrap();
        assert_relative_eq!(v.value, 39.0, max_relative = 1e-11);
    }

    #[test]
    fn variation_line_annihilates_low_degree_polynomials() {
        let t = line_sites(|s| s * (s + 1.0) / 2.0, 25).unwrap();
        let obs: Vec<f64> =
            t.sites().iter().map(|&x| 5.0 - 3.0 * x + 2.0 * x * x).collect();
        for i in 1..=(25 - 3) {
            let row = a_coefficients(&t, 1, 3, i).unwrap();
            let inc: f64 = row
                .weights
                .iter()
                .enumerate()
                .map(|(k, &w)| w * obs[i - 1 + k])
                .sum();
            let rowscale: f64 = row
                .weights
                .iter()
                .enumerate()
                .map(|(k, &w)| (w * obs[i - 1 + k]).abs())
                .sum();
            assert!(
                inc.abs() <= 1e-12 * rowscale,
                "degree-2 field leaks through ℓ=3 at row {i}"
            );
        }
    }

    #[test]
    fn variation_curve_equals_line_on_exact_straight_design() {
        let n = 17;
        let t = line_sites(|s| s, n).unwrap();
        let c = straight_curve(t.sites());
        let obs: Vec<f64> = (0..n).map(|k| ((k * k + 3) % 11) as f64 * 0.25).collect();
        for theta in [1usize, 2] {
            let vl = variation_line(&obs, &t, theta, 1).unwrap();
            let vc = variation_curve(&obs, &c, theta, 1).unwrap();
            assert_eq!(vl.value, vc.value, "θ={theta}");
        }
    }

    #[test]
    fn variation_curve_of_cumulative_chords_counts_rows() {
        // On a straight curve the chord distances are additive, so the
        // cumulative-chord observation X_j = d_{1,j} has every order-1
        // increment equal to 1 and the statistic equals n − θ.
        let sites: Vec<f64> = vec![0.0, 0.13, 0.21, 0.4, 0.55, 0.81, 1.0, 1.31];
        let c = straight_curve(&sites);
        let obs: Vec<f64> = sites.iter().map(|&t| t - sites[0]).collect();
        for theta in [1usize, 2] {
            let v = variation_curve(&obs, &c, theta, 1).unwrap();
            assert_relative_eq!(v.value, (8 - theta) as f64, max_relative = 1e-9);
        }
    }

    #[test]
    fn curve_rows_map_own_chords_to_ell() {
        // The q = ℓ chord-moment identity on every row of a genuinely
        // curved design: Σₖ b·d^ℓ = ℓ.
        let l = std::f64::consts::FRAC_PI_2;
        let c = curve_sites(|t| [t.cos(), t.sin()], |s| s * (s + 1.0) / (l + 1.0), l, 30)
            .unwrap();
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                for i in 1..=(30 - theta * ell) {
                    let row = b_coefficients(&c, theta, ell, i).unwrap();
                    let inc: f64 = row
                        .weights
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| w * c.chord(i - 1, i - 1 + theta * k).powi(ell as i32))
                        .sum();
                    assert_relative_eq!(inc, ell as f64, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn variation_lattice_annihilates_affine_fields() {
        let map = |u: f64, v: f64| {
            [(u * u - v * v + u) / 3.0, (2.0 * u * v + v) / 3.0]
        };
        let n = 10;
        let d = lattice_sites(map, n).unwrap();
        let affine: Vec<f64> = d
            .points()
            .iter()
            .map(|p| 2.5 + 1.5 * p[0] - 0.75 * p[1])
            .collect();
        for theta in [1usize, 2] {
            for ell in [1usize, 2] {
                let v = variation_lattice(&affine, &d, theta, ell).unwrap();
                assert!(
                    v.value <= 1e-16,
                    "affine field not annihilated: {:e} (θ={theta}, ℓ={ell})",
                    v.value
                );
                assert_eq!(v.term_count, (n - theta) * (n - theta));
            }
        }
    }

    #[test]
    fn variation_lattice_bilinear_field_on_identity_map() {
        // X = x₁x₂ on the identity lattice: each θ=1 increment is 1/n, so
        // V̄ = (n−1)²/n².
        let n = 9;
        let d = lattice_sites(|u, v| [u, v], n).unwrap();
        let obs: Vec<f64> = d.points().iter().map(|p| p[0] * p[1]).collect();
        let v = variation_lattice(&obs, &d, 1, 1).unwrap();
        let nf = n as f64;
        assert_relative_eq!(
            v.value,
            (nf - 1.0) * (nf - 1.0) / (nf * nf),
            max_relative = 1e-12
        );
    }

    #[test]
    fn variation_length_mismatch_is_an_error() {
        let t = line_sites(|s| s, 10).unwrap();
        assert!(matches!(
            variation_line(&[0.0; 9], &t, 1, 1),
            Err(QvarError::LengthMismatch { expected: 10, got: 9 })
        ));
        let d = lattice_sites(|u, v| [u, v], 5).unwrap();
        assert!(matches!(
            variation_lattice(&[0.0; 24], &d, 1, 1),
            Err(QvarError::LengthMismatch { expected: 25, got: 24 })
        ));
    }

    #[test]
    fn pairwise_sum_matches_sequential_on_smooth_data() {
        let v: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.37).sin()).collect();
        let seq: f64 = v.iter().sum();
        assert_relative_eq!(pairwise_sum(&v), seq, max_relative = 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[4.0]), 4.0);
    }

    proptest! {
        #[test]
        fn moment_identities_hold_on_random_transects(
            raw in proptest::collection::vec(0.001f64..1.0, 12..40),
            theta in 1usize..=2,
            ell in 1usize..=4,
        ) {
            let mut sites = raw;
            sites.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sites.dedup_by(|a, b| (*a - *b).abs() < 1e-4);
            prop_assume!(sites.len() > 2 * theta * ell + 2);
            let t = LineTransect::from_sites(sites).unwrap();
            let i = 1 + (t.n() - theta * ell) / 2;
            let row = a_coefficients(&t, theta, ell, i).unwrap();
            let coords: Vec<f64> =
                (0..=ell).map(|k| t.sites()[i - 1 + theta * k]).collect();
            for q in 0..ell {
                let m = centered_moment(&row, &coords, q);
                let scale: f64 = row.weights.iter()
                    .zip(coords.iter())
                    .map(|(&w, &s)| (w * (s - coords[0]).powi(q as i32)).abs())
                    .sum::<f64>().max(1.0);
                prop_assert!(m.abs() <= 1e-9 * scale);
            }
            let fact: f64 = (1..=ell).map(|v| v as f64).product();
            let lead = centered_moment(&row, &coords, ell);
            prop_assert!((lead - fact).abs() <= 1e-9 * fact);
        }

        #[test]
        fn variations_ignore_constant_shifts(
            seed_obs in proptest::collection::vec(-2.0f64..2.0, 30),
            shift in -50.0f64..50.0,
        ) {
            let t = line_sites(|s| s * (s + 1.0) / 2.0, 30).unwrap();
            let shifted: Vec<f64> = seed_obs.iter().map(|&x| x + shift).collect();
            for ell in [1usize, 2, 3] {
                let v0 = variation_line(&seed_obs, &t, 1, ell).unwrap().value;
                let v1 = variation_line(&shifted, &t, 1, ell).unwrap().value;
                prop_assert!(
                    (v0 - v1).abs() <= 1e-7 * v0.abs().max(1e-12),
                    "shift changed V from {v0} to {v1}"
                );
            }
        }
    }
}
