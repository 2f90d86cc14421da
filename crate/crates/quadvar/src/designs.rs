//! Sampling designs: line transects, curves with chord distances, and
//! deformed lattices.
//!
//! Three observation geometries feed the estimators:
//!
//! * [`LineTransect`]: sites 0 = t₁ < t₂ < … < tₙ = 1 on a segment,
//!   generated as tᵢ = φ((i−1)/(n−1)) from a strictly increasing map φ.
//! * [`CurveDesign`]: points γ(φ(L(i−1)/(n−1))) along a planar curve,
//!   together with the chord distances d_{i,j} = ‖γ(tᵢ) − γ(tⱼ)‖ the curve
//!   estimator consumes (precomputed for |i − j| ≤ 4, the widest stencil any
//!   supported order reaches).
//! * [`LatticeDesign`]: an n×n grid x^{i₁,i₂} = φ̃(i₁/n, i₂/n) deformed by a
//!   planar diffeomorphism.
//!
//! [`recover_order`] reconstructs the arc ordering of shuffled curve points
//! by two-ended nearest-neighbor growth, so the curve estimator works when
//! only an unordered point cloud is observed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Widest index offset with precomputed chord distances: statistic orders
/// satisfy θℓ ≤ 4.
pub const CHORD_BAND: usize = 4;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("design needs at least {needed} sites, got {got}")]
    TooFewSites { needed: usize, got: usize },
    #[error("sites must be strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
    #[error("map endpoint {name} = {value} differs from required {expected}")]
    EndpointMismatch { name: &'static str, value: f64, expected: f64 },
    #[error("map is not strictly increasing on the validation grid near s = {0}")]
    NonMonotoneMap(f64),
    #[error("map slope varies too much: min/max grid slope {0:.3e} is below 0.05")]
    SlopeCollapse(f64),
    #[error("coincident design points at indices {i} and {j}")]
    CoincidentPoints { i: usize, j: usize },
    #[error(
        "ordering ambiguous: nearest unused point at distance {distance:.6e} \
         exceeds 3x the running median adjacent gap ({median:.6e})"
    )]
    OrderingAmbiguous { distance: f64, median: f64 },
    #[error("coordinates must be finite (found {0})")]
    NonFiniteCoordinate(f64),
    #[error("site dimension must be 1 or 2, got {0}")]
    BadDimension(u8),
    #[error("point {index} has {got} coordinates, expected {expected}")]
    PointLengthMismatch { index: usize, expected: usize, got: usize },
    #[error("expected a {expected}-dimensional site set, got dimension {got}")]
    DimensionMismatch { expected: u8, got: u8 },
}

/// A set of observation sites in one or two dimensions.
///
/// Serializes to `{ "dimension": 1|2, "points": [[x], …] or [[x,y], …],
/// "ordered": bool }`. One-dimensional sites are padded with y = 0
/// internally so distance code is dimension-agnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSiteSet", into = "RawSiteSet")]
pub struct SiteSet {
    dimension: u8,
    points: Vec<[f64; 2]>,
    ordered: bool,
}

#[derive(Serialize, Deserialize)]
struct RawSiteSet {
    dimension: u8,
    points: Vec<Vec<f64>>,
    ordered: bool,
}

impl TryFrom<RawSiteSet> for SiteSet {
    type Error = DesignError;

    fn try_from(raw: RawSiteSet) -> Result<Self, DesignError> {
        if raw.dimension != 1 && raw.dimension != 2 {
            return Err(DesignError::BadDimension(raw.dimension));
        }
        let dim = raw.dimension as usize;
        let mut points = Vec::with_capacity(raw.points.len());
        for (index, p) in raw.points.iter().enumerate() {
            if p.len() != dim {
                return Err(DesignError::PointLengthMismatch {
                    index,
                    expected: dim,
                    got: p.len(),
                });
            }
            for &c in p {
                if !c.is_finite() {
                    return Err(DesignError::NonFiniteCoordinate(c));
                }
            }
            points.push([p[0], if dim == 2 { p[1] } else { 0.0 }]);
        }
        Ok(SiteSet { dimension: raw.dimension, points, ordered: raw.ordered })
    }
}

impl From<SiteSet> for RawSiteSet {
    fn from(s: SiteSet) -> RawSiteSet {
        let dim = s.dimension as usize;
        RawSiteSet {
            dimension: s.dimension,
            points: s.points.iter().map(|p| p[..dim].to_vec()).collect(),
            ordered: s.ordered,
        }
    }
}

impl SiteSet {
    pub fn one_dimensional(coords: Vec<f64>) -> Self {
        SiteSet {
            dimension: 1,
            points: coords.into_iter().map(|x| [x, 0.0]).collect(),
            ordered: true,
        }
    }

    pub fn two_dimensional(points: Vec<[f64; 2]>) -> Self {
        SiteSet { dimension: 2, points, ordered: true }
    }

    pub fn mark_unordered(mut self) -> Self {
        self.ordered = false;
        self
    }

    pub fn dimension(&self) -> u8 {
        self.dimension
    }

    pub fn ordered(&self) -> bool {
        self.ordered
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    /// Coordinates of a one-dimensional site set.
    pub fn coordinates(&self) -> Result<Vec<f64>, DesignError> {
        if self.dimension != 1 {
            return Err(DesignError::DimensionMismatch { expected: 1, got: self.dimension });
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = self.points[i];
        let b = self.points[j];
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Ordered sites 0 = t₁ < … < tₙ = 1 on the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LineTransect {
    sites: Vec<f64>,
}

impl LineTransect {
    /// Builds a transect from explicit sites, rescaling them affinely onto
    /// [0, 1]. The input must be strictly increasing.
    pub fn from_sites(sites: Vec<f64>) -> Result<Self, DesignError> {
        if sites.len() < 2 {
            return Err(DesignError::TooFewSites { needed: 2, got: sites.len() });
        }
        for &t in &sites {
            if !t.is_finite() {
                return Err(DesignError::NonFiniteCoordinate(t));
            }
        }
        for i in 1..sites.len() {
            if sites[i] <= sites[i - 1] {
                return Err(DesignError::NotIncreasing(i));
            }
        }
        let lo = sites[0];
        let span = sites[sites.len() - 1] - lo;
        let mut scaled: Vec<f64> = sites.iter().map(|&t| (t - lo) / span).collect();
        scaled[0] = 0.0;
        let last = scaled.len() - 1;
        scaled[last] = 1.0;
        Ok(LineTransect { sites: scaled })
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn site_set(&self) -> SiteSet {
        SiteSet::one_dimensional(self.sites.clone())
    }
}

/// Snap tolerance for map endpoint checks, relative to the interval length.
const ENDPOINT_TOL: f64 = 1e-9;

/// Minimal allowed ratio of smallest to largest grid slope of a design map;
/// below this the transect gaps degenerate relative to 1/n.
const SLOPE_RATIO_FLOOR: f64 = 0.05;

/// Sites tᵢ = φ((i−1)/(n−1)) for a strictly increasing φ with φ(0) = 0 and
/// φ(1) = 1. Monotonicity and slope regularity are validated on a grid of
/// 10n points; maps whose slope collapses (such as φ(s) = s², flat at 0) are
/// rejected.
pub fn line_sites(phi: impl Fn(f64) -> f64, n: usize) -> Result<LineTransect, DesignError> {
    if n < 2 {
        return Err(DesignError::TooFewSites { needed: 2, got: n });
    }
    validate_increasing_map(&phi, 1.0, 10 * n, Some(SLOPE_RATIO_FLOOR))?;
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        sites.push(phi(i as f64 / (n - 1) as f64));
    }
    sites[0] = 0.0;
    sites[n - 1] = 1.0;
    for i in 1..n {
        if sites[i] <= sites[i - 1] {
            return Err(DesignError::NotIncreasing(i));
        }
    }
    Ok(LineTransect { sites })
}

fn validate_increasing_map(
    phi: &impl Fn(f64) -> f64,
    l: f64,
    grid: usize,
    slope_floor: Option<f64>,
) -> Result<(), DesignError> {
    let p0 = phi(0.0);
    if p0.abs() > ENDPOINT_TOL * l.max(1.0) {
        return Err(DesignError::EndpointMismatch { name: "phi(0)", value: p0, expected: 0.0 });
    }
    let pl = phi(l);
    if (pl - l).abs() > ENDPOINT_TOL * l.max(1.0) {
        return Err(DesignError::EndpointMismatch { name: "phi(L)", value: pl, expected: l });
    }
    let h = l / grid as f64;
    let mut min_slope = f64::INFINITY;
    let mut max_slope = 0.0f64;
    let mut prev = p0;
    for k in 1..=grid {
        let s = l * k as f64 / grid as f64;
        let v = phi(s);
        if !v.is_finite() {
            return Err(DesignError::NonFiniteCoordinate(v));
        }
        let slope = (v - prev) / h;
        if slope <= 0.0 {
            return Err(DesignError::NonMonotoneMap(s));
        }
        min_slope = min_slope.min(slope);
        max_slope = max_slope.max(slope);
        prev = v;
    }
    if let Some(floor) = slope_floor {
        if min_slope < floor * max_slope {
            return Err(DesignError::SlopeCollapse(min_slope / max_slope));
        }
    }
    Ok(())
}

/// Planar points along a curve, with precomputed chord distances for index
/// offsets up to [`CHORD_BAND`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDesign {
    points: Vec<[f64; 2]>,
    /// chords[i][k−1] = d_{i, i+k} for k = 1..=CHORD_BAND (0 past the end).
    chords: Vec<[f64; CHORD_BAND]>,
}

impl CurveDesign {
    /// Builds a curve design from ordered points, computing the chord
    /// distances. Points within the chord band must be pairwise distinct.
    pub fn from_points(points: Vec<[f64; 2]>) -> Result<Self, DesignError> {
        let n = points.len();
        if n < 2 {
            return Err(DesignError::TooFewSites { needed: 2, got: n });
        }
        for p in &points {
            for &c in p {
                if !c.is_finite() {
                    return Err(DesignError::NonFiniteCoordinate(c));
                }
            }
        }
        let mut chords = vec![[0.0; CHORD_BAND]; n];
        for i in 0..n {
            for k in 1..=CHORD_BAND.min(n - 1 - i) {
                let j = i + k;
                let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
                if d <= 0.0 {
                    return Err(DesignError::CoincidentPoints { i, j });
                }
                chords[i][k - 1] = d;
            }
        }
        Ok(CurveDesign { points, chords })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Chord distance d_{i,j}, with d_{i,i} = 0. Only offsets within
    /// [`CHORD_BAND`] are available.
    pub fn chord(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= CHORD_BAND, "chord offset {} outside band", hi - lo);
        self.chords[lo][hi - lo - 1]
    }

    pub fn site_set(&self) -> SiteSet {
        SiteSet::two_dimensional(self.points.clone())
    }
}

/// Points γ(φ(L(i−1)/(n−1))) on a curve γ: [0, L] → ℝ², where φ maps [0, L]
/// onto itself strictly increasingly. The n points must be pairwise
/// distinct (a numerical stand-in for γ being injective).
pub fn curve_sites(
    gamma: impl Fn(f64) -> [f64; 2],
    phi: impl Fn(f64) -> f64,
    l: f64,
    n: usize,
) -> Result<CurveDesign, DesignError> {
    if n < 2 {
        return Err(DesignError::TooFewSites { needed: 2, got: n });
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(DesignError::NonFiniteCoordinate(l));
    }
    validate_increasing_map(&phi, l, 10 * n, None)?;
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        points.push(gamma(phi(l * i as f64 / (n - 1) as f64)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i] == points[j] {
                return Err(DesignError::CoincidentPoints { i, j });
            }
        }
    }
    CurveDesign::from_points(points)
}

/// An n×n deformed grid x^{i₁,i₂} = φ̃(i₁/n, i₂/n), 1 ≤ i₁, i₂ ≤ n, stored
/// row-major with i₁ as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDesign {
    side: usize,
    points: Vec<[f64; 2]>,
}

impl LatticeDesign {
    /// Builds a lattice from explicit points in row-major order (i₁ slow).
    pub fn from_points(side: usize, points: Vec<[f64; 2]>) -> Result<Self, DesignError> {
        if side < 2 {
            return Err(DesignError::TooFewSites { needed: 2, got: side });
        }
        if points.len() != side * side {
            return Err(DesignError::TooFewSites { needed: side * side, got: points.len() });
        }
        for p in &points {
            for &c in p {
                if !c.is_finite() {
                    return Err(DesignError::NonFiniteCoordinate(c));
                }
            }
        }
        for a in 0..points.len() {
            for b in (a + 1)..points.len() {
                if points[a] == points[b] {
                    return Err(DesignError::CoincidentPoints { i: a, j: b });
                }
            }
        }
        Ok(LatticeDesign { side, points })
    }

    /// Side count n of the n×n grid.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Grid point x^{i₁,i₂}, indices 1-based as in the defining map.
    pub fn point(&self, i1: usize, i2: usize) -> [f64; 2] {
        debug_assert!((1..=self.side).contains(&i1) && (1..=self.side).contains(&i2));
        self.points[(i1 - 1) * self.side + (i2 - 1)]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn site_set(&self) -> SiteSet {
        SiteSet::two_dimensional(self.points.clone())
    }
}

/// Deformed lattice from a planar map: points φ̃(i₁/n, i₂/n) over the grid
/// {1..n}². The map must be injective on the grid.
pub fn lattice_sites(
    phi_tilde: impl Fn(f64, f64) -> [f64; 2],
    n: usize,
) -> Result<LatticeDesign, DesignError> {
    if n < 2 {
        return Err(DesignError::TooFewSites { needed: 2, got: n });
    }
    let mut points = Vec::with_capacity(n * n);
    for i1 in 1..=n {
        for i2 in 1..=n {
            points.push(phi_tilde(i1 as f64 / n as f64, i2 as f64 / n as f64));
        }
    }
    LatticeDesign::from_points(n, points)
}

/// Extracts one grid row (the one with median second index) of a lattice as
/// a curve design, in first-index order. Adjacent points along a row of a
/// smoothly deformed lattice are mutually closest, so the curve estimators
/// apply directly.
pub fn lattice_subset_curve(design: &LatticeDesign) -> Result<CurveDesign, DesignError> {
    let n = design.side();
    if n < 5 {
        return Err(DesignError::TooFewSites { needed: 5, got: n });
    }
    let i2 = (n - 1) / 2 + 1;
    let row: Vec<[f64; 2]> = (1..=n).map(|i1| design.point(i1, i2)).collect();
    CurveDesign::from_points(row)
}

/// Reconstructs the arc ordering of unordered curve points.
///
/// Growth starts at the lexicographically smallest point and extends a chain
/// at whichever end has the nearer unused neighbor. The result recovers the
/// curve ordering whenever adjacent points along the curve are closer to
/// each other than to any non-adjacent point. A chosen neighbor farther than
/// 3× the running median of accepted adjacent gaps signals that this
/// separation condition fails.
///
/// Returns the permutation `order` with `order[k]` = index into `points` of
/// the k-th point along the recovered curve, oriented so that the first
/// point of the chain is lexicographically smaller than the last. The input
/// ordering being unknown, this fixed orientation is what makes repeated
/// recovery deterministic; callers that know the true direction can reverse
/// the result.
pub fn recover_order(points: &[[f64; 2]]) -> Result<Vec<usize>, DesignError> {
    let n = points.len();
    if n < 2 {
        return Err(DesignError::TooFewSites { needed: 2, got: n });
    }
    for (a, pa) in points.iter().enumerate() {
        if !pa[0].is_finite() || !pa[1].is_finite() {
            return Err(DesignError::NonFiniteCoordinate(if pa[0].is_finite() {
                pa[1]
            } else {
                pa[0]
            }));
        }
        for (b, pb) in points.iter().enumerate().skip(a + 1) {
            if pa == pb {
                return Err(DesignError::CoincidentPoints { i: a, j: b });
            }
        }
    }

    let start = (0..n)
        .min_by(|&a, &b| {
            let (pa, pb) = (points[a], points[b]);
            pa[0].partial_cmp(&pb[0]).unwrap().then(pa[1].partial_cmp(&pb[1]).unwrap())
        })
        .unwrap();

    let dist = |a: usize, b: usize| -> f64 {
        (points[a][0] - points[b][0]).hypot(points[a][1] - points[b][1])
    };
    let mut used = vec![false; n];
    used[start] = true;
    let mut chain = std::collections::VecDeque::with_capacity(n);
    chain.push_back(start);
    let mut gaps: Vec<f64> = Vec::with_capacity(n - 1);

    while chain.len() < n {
        let nearest_to = |anchor: usize| -> (usize, f64) {
            let mut best = (usize::MAX, f64::INFINITY);
            for cand in 0..n {
                if !used[cand] {
                    let d = dist(anchor, cand);
                    if d < best.1 {
                        best = (cand, d);
                    }
                }
            }
            best
        };
        let head = *chain.front().unwrap();
        let tail = *chain.back().unwrap();
        let (hc, hd) = nearest_to(head);
        let (tc, td) = if tail == head { (hc, f64::INFINITY) } else { nearest_to(tail) };
        let (chosen, d, at_front) = if hd <= td { (hc, hd, true) } else { (tc, td, false) };

        if gaps.len() >= 3 {
            let mut sorted = gaps.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = sorted[sorted.len() / 2];
            if d > 3.0 * median {
                return Err(DesignError::OrderingAmbiguous { distance: d, median });
            }
        }
        used[chosen] = true;
        if at_front {
            chain.push_front(chosen);
        } else {
            chain.push_back(chosen);
        }
        gaps.push(d);
    }
    let mut order: Vec<usize> = chain.into_iter().collect();
    if points[order[n - 1]] < points[order[0]] {
        order.reverse();
    }
    Ok(order)
}
