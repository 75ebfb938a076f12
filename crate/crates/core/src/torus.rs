//! The group action on the torus, shrinking-target solution search, decay
//! regime classification for the threshold function, and the exact quantitative
//! ergodic-average check for characters.
//!
//! Points live on `T^d = R^d / Z^d` with rational coordinates.  Exact-mode
//! points are genuine rationals and the action is computed without rounding.
//! Real-mode points are high-precision rational approximants of real
//! coordinates (any `f64` is one such approximant); the arithmetic is still
//! exact on the approximant, and threshold tests near a target boundary carry
//! a margin flag instead of a silent rounding decision.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::enumerate::{enumerate_ball, BallIndex, EnumerateError, EnumerationConfig, ShellMeasure};
use crate::interval::{self, rational_to_f64, RatInterval};
use crate::matrix::{GroupElement, GroupPresentation};

#[derive(Debug, Error)]
pub enum TorusError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("threshold exponents must be finite with a >= 0 (got a={a}, b={b})")]
    InvalidPsi { a: f64, b: f64 },
    #[error("character frequency vector must be nonzero")]
    ZeroFrequency,
    #[error("annulus inner radius must be nonnegative")]
    NegativeInner,
}

#[derive(Debug, Error)]
pub enum ShrinkError {
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

/// Whether coordinates are exact values or high-precision approximants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordMode {
    Exact,
    Real,
}

/// A point of `T^d` with coordinates reduced into `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusPoint {
    coords: Vec<BigRational>,
    mode: CoordMode,
}

fn reduce_mod_1(q: BigRational) -> BigRational {
    let f = q.floor();
    q - f
}

impl TorusPoint {
    /// Exact rational point.
    pub fn exact(coords: Vec<BigRational>) -> Self {
        Self { coords: coords.into_iter().map(reduce_mod_1).collect(), mode: CoordMode::Exact }
    }

    /// Real point given by high-precision rational approximants.  The caller
    /// owns the precision budget; 128 fractional bits is the working floor
    /// for irrational coordinates.
    pub fn real(coords: Vec<BigRational>) -> Self {
        Self { coords: coords.into_iter().map(reduce_mod_1).collect(), mode: CoordMode::Real }
    }

    /// Real point from machine floats (every finite `f64` is a dyadic
    /// rational, so no rounding happens here).
    pub fn from_f64(coords: &[f64]) -> Result<Self, TorusError> {
        let rats = coords
            .iter()
            .map(|&c| BigRational::from_float(c).ok_or(TorusError::NonFiniteCoordinate))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::real(rats))
    }

    pub fn zero(dim: usize) -> Self {
        Self { coords: vec![BigRational::zero(); dim], mode: CoordMode::Exact }
    }

    /// Seeded uniform point on the `2^-64` grid, in real mode.  The stream is
    /// counter-based, so a seed fully determines the point.
    pub fn random_uniform(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let denom = BigInt::one() << 64u32;
        let coords = (0..dim)
            .map(|_| BigRational::new(BigInt::from(rng.gen::<u64>()), denom.clone()))
            .collect();
        Self { coords, mode: CoordMode::Real }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[BigRational] {
        &self.coords
    }

    pub fn mode(&self) -> CoordMode {
        self.mode
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.coords.iter().map(rational_to_f64).collect()
    }
}

/// Applies the automorphism `g` to `x`: the matrix-vector product reduced
/// mod 1, exact on the stored rationals in either mode.
pub fn act(g: &GroupElement, x: &TorusPoint) -> Result<TorusPoint, TorusError> {
    let d = x.dim();
    if g.dim() != d {
        return Err(TorusError::DimensionMismatch(g.dim(), d));
    }
    let coords = (0..d)
        .map(|i| {
            let mut acc = BigRational::zero();
            for (j, xc) in x.coords.iter().enumerate() {
                acc += BigRational::from_integer(g.entry(i, j).clone()) * xc;
            }
            reduce_mod_1(acc)
        })
        .collect();
    Ok(TorusPoint { coords, mode: x.mode })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorusNorm {
    Euclidean,
    Sup,
}

/// Per-coordinate wraparound gap, in `[0, 1/2]`.
fn coord_gap(a: &BigRational, b: &BigRational) -> BigRational {
    let mut d = a - b;
    if d.is_negative() {
        d = -d;
    }
    let wrap = BigRational::one() - &d;
    d.min(wrap)
}

/// Exact squared euclidean distance on the torus.
pub(crate) fn dist_sq_euclidean(x: &TorusPoint, y: &TorusPoint) -> BigRational {
    x.coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| {
            let g = coord_gap(a, b);
            &g * &g
        })
        .sum()
}

/// Exact sup-norm distance on the torus.
pub(crate) fn dist_sup(x: &TorusPoint, y: &TorusPoint) -> BigRational {
    x.coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| coord_gap(a, b))
        .max()
        .unwrap_or_else(BigRational::zero)
}

/// Distance on the torus: the minimum over integer translates, reported as a
/// float.  Bounded by `sqrt(d)/2` (euclidean) and `1/2` (sup).
pub fn torus_dist(x: &TorusPoint, y: &TorusPoint, norm: TorusNorm) -> Result<f64, TorusError> {
    if x.dim() != y.dim() {
        return Err(TorusError::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(match norm {
        TorusNorm::Euclidean => rational_to_f64(&dist_sq_euclidean(x, y)).sqrt(),
        TorusNorm::Sup => rational_to_f64(&dist_sup(x, y)),
    })
}

/// The monotone family of targets used in the solution search.  `member(r)`
/// denotes the target at radius parameter `r > 0`.
#[derive(Debug, Clone)]
pub enum TargetKind {
    /// `{ z : |z - c|_2 < r }`; Lebesgue measure `pi r^2` in dimension 2.
    EuclideanBall,
    /// Axis-aligned open box.  Raw form (`comparable = false`) has side `r`
    /// and measure `r^d`.  With `comparable = true` (dimension 2) the side is
    /// `sqrt(pi) * r`, so the measure matches the euclidean ball exactly.
    SupBox { comparable: bool },
    /// `{ z : inner < |z - c|_2 and |z - c|_2^2 < inner^2 + r^2 }`; nested in
    /// `r` with measure `pi r^2` in dimension 2 (while it fits untruncated).
    Annulus { inner: BigRational },
}

#[derive(Debug, Clone)]
pub struct TargetFamily {
    pub kind: TargetKind,
    pub center: TorusPoint,
}

impl TargetFamily {
    pub fn ball(center: TorusPoint) -> Self {
        Self { kind: TargetKind::EuclideanBall, center }
    }

    pub fn sup_box(center: TorusPoint, comparable: bool) -> Self {
        Self { kind: TargetKind::SupBox { comparable }, center }
    }

    pub fn annulus(center: TorusPoint, inner: BigRational) -> Result<Self, TorusError> {
        if inner.is_negative() {
            return Err(TorusError::NegativeInner);
        }
        Ok(Self { kind: TargetKind::Annulus { inner }, center })
    }

    /// Lebesgue measure of `member(r)`.  Ball and annulus measures assume
    /// dimension 2; the raw box is `r^d` in any dimension.
    pub fn measure(&self, r: f64) -> f64 {
        let d = self.center.dim();
        match &self.kind {
            TargetKind::EuclideanBall | TargetKind::Annulus { .. } => {
                assert_eq!(d, 2, "ball/annulus measure normalization assumes dimension 2");
                std::f64::consts::PI * r * r
            }
            TargetKind::SupBox { comparable: false } => r.powi(d as i32),
            TargetKind::SupBox { comparable: true } => {
                assert_eq!(d, 2, "measure-matched boxes assume dimension 2");
                std::f64::consts::PI * r * r
            }
        }
    }

    /// Exact membership of `z` in `member(r)` for a rational radius.  All
    /// comparisons are decided exactly; the measure-matched box escalates an
    /// enclosure of `pi` until the (always irrational) threshold separates.
    pub fn contains_exact(&self, z: &TorusPoint, r: &BigRational) -> Result<bool, TorusError> {
        if z.dim() != self.center.dim() {
            return Err(TorusError::DimensionMismatch(z.dim(), self.center.dim()));
        }
        if !r.is_positive() {
            return Ok(false);
        }
        Ok(match &self.kind {
            TargetKind::EuclideanBall => dist_sq_euclidean(z, &self.center) < r * r,
            TargetKind::SupBox { comparable: false } => {
                dist_sup(z, &self.center) < r / BigRational::from_integer(2.into())
            }
            TargetKind::SupBox { comparable: true } => {
                // dsup < sqrt(pi) r / 2  <=>  4 dsup^2 / r^2 < pi.
                let dsup = dist_sup(z, &self.center);
                if dsup.is_zero() {
                    return Ok(true);
                }
                let q = BigRational::from_integer(4.into()) * &dsup * &dsup / (r * r);
                interval::decide_cmp(&q, interval::pi) == std::cmp::Ordering::Greater
            }
            TargetKind::Annulus { inner } => {
                let d2 = dist_sq_euclidean(z, &self.center);
                d2 > inner * inner && d2 < inner * inner + r * r
            }
        })
    }

    /// Reduces membership at an interval-valued radius to one comparison
    /// `quantity < threshold(r)`: the exact quantity and a threshold builder
    /// mapping an `r` enclosure at some precision to the threshold enclosure.
    ///
    /// Returns `None` when the point is outside every member regardless of
    /// `r` (annulus inner exclusion).
    fn comparison(&self, z: &TorusPoint) -> Option<(BigRational, ThresholdForm)> {
        match &self.kind {
            TargetKind::EuclideanBall => {
                Some((dist_sq_euclidean(z, &self.center), ThresholdForm::RadiusSquared))
            }
            TargetKind::SupBox { comparable: false } => {
                Some((dist_sup(z, &self.center), ThresholdForm::HalfRadius))
            }
            TargetKind::SupBox { comparable: true } => {
                let dsup = dist_sup(z, &self.center);
                Some((&dsup * &dsup, ThresholdForm::QuarterPiRadiusSquared))
            }
            TargetKind::Annulus { inner } => {
                let excess = dist_sq_euclidean(z, &self.center) - inner * inner;
                if excess.is_positive() {
                    Some((excess, ThresholdForm::RadiusSquared))
                } else {
                    None
                }
            }
        }
    }
}

/// How the decisive threshold is derived from an enclosure of the radius.
#[derive(Debug, Clone, Copy)]
enum ThresholdForm {
    RadiusSquared,
    HalfRadius,
    QuarterPiRadiusSquared,
}

impl ThresholdForm {
    fn apply(self, r: &RatInterval, bits: u32) -> RatInterval {
        match self {
            ThresholdForm::RadiusSquared => r.mul(r),
            ThresholdForm::HalfRadius => r.scale(&BigRational::new(1.into(), 2.into())),
            ThresholdForm::QuarterPiRadiusSquared => {
                let quarter = BigRational::new(1.into(), 4.into());
                interval::pi(bits).mul(&r.mul(r)).scale(&quarter)
            }
        }
    }
}

/// Decreasing threshold function `R -> R^{-a} * (log R)^b` applied to the
/// matrix norm; requires `a >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSpec {
    a: f64,
    b: f64,
}

impl PsiSpec {
    pub fn new(a: f64, b: f64) -> Result<Self, TorusError> {
        if !a.is_finite() || !b.is_finite() || a < 0.0 {
            return Err(TorusError::InvalidPsi { a, b });
        }
        Ok(Self { a, b })
    }

    /// Pure power law `R^{-alpha}`.
    pub fn power(alpha: f64) -> Result<Self, TorusError> {
        Self::new(alpha, 0.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Float evaluation, for reporting only.
    pub fn eval_f64(&self, norm: f64) -> f64 {
        norm.powf(-self.a) * norm.ln().powf(self.b)
    }

    /// Encloses `psi(|g|)` where `|g|` is the matrix norm, via the enclosure
    /// `h` of `log |g|` (which must be strictly positive).
    fn radius_interval(&self, h: &RatInterval, bits: u32) -> RatInterval {
        let a_rat = BigRational::from_float(self.a).expect("validated finite");
        let mut r = interval::exp_interval(&h.scale(&-a_rat), bits);
        if self.b != 0.0 {
            let b_rat = BigRational::from_float(self.b).expect("validated finite");
            let ln_h = interval::ln_interval(h, bits);
            r = r.mul(&interval::exp_interval(&ln_h.scale(&b_rat), bits));
        }
        r
    }
}

/// The threshold function is evaluated at the matrix norm `|g| = e^{d(g,e)/2}`
/// and is only used where `|g| >= 2`, which for integer matrices is the exact
/// gate `F >= 5` on the squared Frobenius norm (`F >= 17/4` marks `|g| = 2`).
fn norm_at_least_two(g: &GroupElement) -> bool {
    g.frobenius_sq() >= BigInt::from(5)
}

const MEMBERSHIP_BASE_BITS: u32 = 96;
const MEMBERSHIP_MAX_BITS: u32 = 24_576;
/// Margin below which a resolved hit is still flagged for review.
pub const BORDERLINE_TOL: f64 = 1e-10;

/// Escalating decision of `quantity < threshold` where the threshold is the
/// target form applied to the radius `psi(|g|)`.
fn decide_threshold(
    g: &GroupElement,
    psi: &PsiSpec,
    form: ThresholdForm,
    quantity: &BigRational,
) -> Hit {
    let mut bits = MEMBERSHIP_BASE_BITS;
    loop {
        let h = g
            .displacement_interval(bits)
            .expect("norm gate excludes displacement zero")
            .scale(&BigRational::new(1.into(), 2.into()));
        let threshold = form.apply(&psi.radius_interval(&h, bits), bits);
        match threshold.cmp_rational(quantity) {
            Some(std::cmp::Ordering::Greater) => return Hit::In,
            Some(_) => return Hit::Out,
            None => {
                if bits >= MEMBERSHIP_MAX_BITS {
                    return Hit::Unresolved;
                }
                bits *= 2;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hit {
    In,
    Out,
    Unresolved,
}

/// One solution of the shrinking-target inequality.
#[derive(Debug, Clone)]
pub struct SolutionWitness {
    pub element: GroupElement,
    /// Smallest integer `n` with `d(g, e) <= n`.
    pub radius: u32,
    pub displacement: f64,
    /// Achieved distance to the target center (euclidean, or sup for boxes).
    pub distance: f64,
    /// Radius parameter `psi(|g|)` of the target that was hit.
    pub threshold: f64,
    /// Real-mode hits within [`BORDERLINE_TOL`] of the boundary.
    pub borderline: bool,
}

#[derive(Debug)]
pub struct ShrinkingTargetReport {
    pub max_radius: u32,
    /// `counts[n]` = number of solutions with `d(g, e) <= n`; nondecreasing.
    pub counts: Vec<u64>,
    pub new_in_shell: Vec<u64>,
    /// Elements that passed the norm gate and were tested.
    pub tested: u64,
    /// Elements below the norm gate `|g| >= 2`, where the threshold function
    /// is left undefined.
    pub skipped_small_norm: u64,
    /// Sorted by (radius, matrix); independent of thread count.
    pub witnesses: Vec<SolutionWitness>,
    /// Membership undecided at the maximum precision; never counted.
    pub unresolved: Vec<GroupElement>,
    /// `shell_has_solution[n]` = some solution has displacement in `(n-1, n]`.
    pub shell_has_solution: Vec<bool>,
}

/// Searches the enumerated ball for solutions `g.x` in the target of radius
/// `psi(|g|)` and counts them per displacement shell.
pub fn solve_shrinking_target_indexed(
    ball: &BallIndex,
    x: &TorusPoint,
    target: &TargetFamily,
    psi: &PsiSpec,
) -> Result<ShrinkingTargetReport, TorusError> {
    let d = ball.presentation.dim();
    if x.dim() != d {
        return Err(TorusError::DimensionMismatch(x.dim(), d));
    }
    if target.center.dim() != d {
        return Err(TorusError::DimensionMismatch(target.center.dim(), d));
    }
    let real_mode = x.mode == CoordMode::Real || target.center.mode == CoordMode::Real;

    enum Outcome {
        Skipped,
        Miss,
        Hit(SolutionWitness),
        Unresolved(GroupElement),
    }

    let outcomes: Vec<Outcome> = ball
        .elements()
        .par_iter()
        .map(|be| {
            let g = &be.element;
            if !norm_at_least_two(g) {
                return Ok(Outcome::Skipped);
            }
            let z = act(g, x)?;
            let Some((quantity, form)) = target.comparison(&z) else {
                return Ok(Outcome::Miss);
            };
            match decide_threshold(g, psi, form, &quantity) {
                Hit::Out => Ok(Outcome::Miss),
                Hit::Unresolved => Ok(Outcome::Unresolved(g.clone())),
                Hit::In => {
                    let sigma = (be.displacement.value() / 2.0).exp();
                    let threshold = psi.eval_f64(sigma);
                    let distance = match target.kind {
                        TargetKind::SupBox { .. } => rational_to_f64(&dist_sup(&z, &target.center)),
                        _ => rational_to_f64(&dist_sq_euclidean(&z, &target.center)).sqrt(),
                    };
                    let borderline = real_mode && is_borderline(&target.kind, distance, threshold);
                    Ok(Outcome::Hit(SolutionWitness {
                        element: g.clone(),
                        radius: be.radius,
                        displacement: be.displacement.value(),
                        distance,
                        threshold,
                        borderline,
                    }))
                }
            }
        })
        .collect::<Result<_, TorusError>>()?;

    let mut tested = 0u64;
    let mut skipped = 0u64;
    let mut witnesses = Vec::new();
    let mut unresolved = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Skipped => skipped += 1,
            Outcome::Miss => tested += 1,
            Outcome::Hit(w) => {
                tested += 1;
                witnesses.push(w);
            }
            Outcome::Unresolved(g) => {
                tested += 1;
                unresolved.push(g);
            }
        }
    }
    witnesses.sort_by(|a, b| (a.radius, &a.element).cmp(&(b.radius, &b.element)));
    unresolved.sort();

    let n_max = ball.radius as usize;
    let mut new_in_shell = vec![0u64; n_max + 1];
    for w in &witnesses {
        new_in_shell[w.radius as usize] += 1;
    }
    let mut counts = vec![0u64; n_max + 1];
    let mut acc = 0;
    for (n, &fresh) in new_in_shell.iter().enumerate() {
        acc += fresh;
        counts[n] = acc;
    }
    let shell_has_solution = new_in_shell.iter().map(|&c| c > 0).collect();

    Ok(ShrinkingTargetReport {
        max_radius: ball.radius,
        counts,
        new_in_shell,
        tested,
        skipped_small_norm: skipped,
        witnesses,
        unresolved,
        shell_has_solution,
    })
}

fn is_borderline(kind: &TargetKind, distance: f64, threshold: f64) -> bool {
    match kind {
        TargetKind::EuclideanBall => (distance - threshold).abs() < BORDERLINE_TOL,
        TargetKind::SupBox { comparable: false } => {
            (distance - threshold / 2.0).abs() < BORDERLINE_TOL
        }
        TargetKind::SupBox { comparable: true } => {
            (distance - std::f64::consts::PI.sqrt() * threshold / 2.0).abs() < BORDERLINE_TOL
        }
        TargetKind::Annulus { inner } => {
            let inner = rational_to_f64(inner);
            let outer = (inner * inner + threshold * threshold).sqrt();
            (distance - inner).abs() < BORDERLINE_TOL || (distance - outer).abs() < BORDERLINE_TOL
        }
    }
}

/// Enumerates the ball and runs [`solve_shrinking_target_indexed`].
pub fn solve_shrinking_target(
    p: &GroupPresentation,
    x: &TorusPoint,
    target: &TargetFamily,
    psi: &PsiSpec,
    max_radius: u32,
    cfg: &EnumerationConfig,
) -> Result<ShrinkingTargetReport, ShrinkError> {
    let ball = enumerate_ball(p, max_radius, cfg)?;
    Ok(solve_shrinking_target_indexed(&ball, x, target, psi)?)
}

/// Convergence regime of the threshold function against the growth rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiRegime {
    /// Finitely many solutions almost surely.
    FiniteRegime,
    /// Infinitely many solutions almost surely.
    InfiniteRegime,
    /// Neither closed-form condition applies.
    Gap,
}

/// Closed-form regime classification of `R^{-a} log^b R` against `delta`:
/// finite when `a > delta` or (`a = delta` and `b < -1/2`); infinite when
/// `a < delta` or (`a = delta` and `b > 5/2`).
pub fn classify_psi(psi: &PsiSpec, delta: f64) -> PsiRegime {
    if psi.a > delta || (psi.a == delta && psi.b < -0.5) {
        PsiRegime::FiniteRegime
    } else if psi.a < delta || (psi.a == delta && psi.b > 2.5) {
        PsiRegime::InfiniteRegime
    } else {
        PsiRegime::Gap
    }
}

/// Multiplicities of the transposed images `g^T b` over the atoms of `mu`,
/// weighted by the measure.
pub fn character_image_counts(
    mu: &ShellMeasure,
    freq: &[BigInt],
) -> Result<BTreeMap<Vec<BigInt>, BigRational>, TorusError> {
    if freq.iter().all(|c| c.is_zero()) {
        return Err(TorusError::ZeroFrequency);
    }
    let w = mu.weight();
    let mut map: BTreeMap<Vec<BigInt>, BigRational> = BTreeMap::new();
    for g in mu.atoms() {
        let d = g.dim();
        if d != freq.len() {
            return Err(TorusError::DimensionMismatch(d, freq.len()));
        }
        let image: Vec<BigInt> = (0..d)
            .map(|i| (0..d).map(|j| g.entry(j, i) * &freq[j]).sum())
            .collect();
        *map.entry(image).or_insert_with(BigRational::zero) += &w;
    }
    Ok(map)
}

/// Exact squared `L^2` error of the `mu`-average of the character `e_b`
/// against its space mean (zero): the total weight of coincident pairs
/// `g^T b = h^T b`.  Equals `sum of squared image weights`; for the uniform
/// measure on `S` this is `#{(g,h) : g^T b = h^T b} / |S|^2`.
pub fn ergodic_character_error(mu: &ShellMeasure, freq: &[BigInt]) -> Result<BigRational, TorusError> {
    let counts = character_image_counts(mu, freq)?;
    Ok(counts.values().map(|w| w * w).sum())
}

#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of the same squared error by sampling uniform points:
/// the sample mean of `|sum_v w_v e^(2 pi i <v, x>)|^2`.  Deterministic for a
/// fixed seed (one counter-based stream per sample index).
pub fn ergodic_character_error_mc(
    mu: &ShellMeasure,
    freq: &[BigInt],
    samples: usize,
    seed: u64,
) -> Result<McEstimate, TorusError> {
    assert!(samples >= 2, "need at least two samples");
    let counts = character_image_counts(mu, freq)?;
    let terms: Vec<(Vec<f64>, f64)> = counts
        .iter()
        .map(|(v, w)| (v.iter().map(|c| rational_to_f64(&BigRational::from_integer(c.clone()))).collect(), rational_to_f64(w)))
        .collect();
    let dim = freq.len();
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (v, w) in &terms {
                let phase: f64 =
                    2.0 * std::f64::consts::PI * v.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                re += w * phase.cos();
                im += w * phase.sin();
            }
            re * re + im * im
        })
        .collect();
    let n = samples as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate { mean, stderr: (var / n).sqrt(), samples })
}

/// Per-element threshold data reusable across sample points: enclosures of
/// the radius `|g|^(-alpha)` for every requested exponent.
pub struct ScanCache {
    alphas: Vec<f64>,
    entries: Vec<Vec<CachedThreshold>>,
}

#[derive(Debug, Clone)]
enum CachedThreshold {
    /// Radius capped at the full torus: automatic hit.
    Capped,
    /// Norm gate failed and the exponent is positive: not tested.
    Skip,
    Bounds(RatInterval),
}

impl ScanCache {
    /// Validates the exponents and precomputes radius enclosures for every
    /// ball element.  Exponent 0 caps the target at the whole torus, so the
    /// count at exponent 0 is exactly the ball count.
    pub fn new(ball: &BallIndex, alphas: &[f64]) -> Result<Self, TorusError> {
        for &a in alphas {
            if !a.is_finite() || a < 0.0 {
                return Err(TorusError::InvalidPsi { a, b: 0.0 });
            }
        }
        let entries: Vec<Vec<CachedThreshold>> = ball
            .elements()
            .par_iter()
            .map(|be| {
                let g = &be.element;
                let gate = norm_at_least_two(g);
                let h = if gate {
                    g.displacement_interval(MEMBERSHIP_BASE_BITS)
                        .map(|d| d.scale(&BigRational::new(1.into(), 2.into())))
                } else {
                    None
                };
                alphas
                    .iter()
                    .map(|&a| {
                        if a == 0.0 {
                            CachedThreshold::Capped
                        } else if let Some(h) = &h {
                            let psi = PsiSpec { a, b: 0.0 };
                            CachedThreshold::Bounds(
                                psi.radius_interval(h, MEMBERSHIP_BASE_BITS),
                            )
                        } else {
                            CachedThreshold::Skip
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { alphas: alphas.to_vec(), entries })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

/// Solution counts for a grid of exponents from one pass over the ball.
#[derive(Debug)]
pub struct ExponentScan {
    pub alphas: Vec<f64>,
    pub max_radius: u32,
    /// `counts[i][n]` = solutions for exponent `alphas[i]` with `d(g,e) <= n`;
    /// nondecreasing in `n`, nonincreasing in `i` when the exponents ascend.
    pub counts: Vec<Vec<u64>>,
    pub new_in_shell: Vec<Vec<u64>>,
    /// Undecided memberships per exponent; never counted.
    pub unresolved: Vec<u64>,
}

/// Counts solutions of `dist(g.x, target) < |g|^(-alpha)` for all exponents
/// simultaneously, reusing the cached per-element thresholds.
pub fn exponent_scan_cached(
    cache: &ScanCache,
    ball: &BallIndex,
    x: &TorusPoint,
    target: &TargetFamily,
) -> Result<ExponentScan, TorusError> {
    let d = ball.presentation.dim();
    if x.dim() != d {
        return Err(TorusError::DimensionMismatch(x.dim(), d));
    }
    if target.center.dim() != d {
        return Err(TorusError::DimensionMismatch(target.center.dim(), d));
    }
    assert_eq!(cache.entries.len(), ball.elements().len(), "cache built for a different ball");
    let n_alpha = cache.alphas.len();

    // Per element: for each exponent, hit = Some(true/false), None = unresolved.
    let rows: Vec<(u32, Vec<Option<bool>>)> = ball
        .elements()
        .par_iter()
        .zip(&cache.entries)
        .map(|(be, thresholds)| {
            let g = &be.element;
            let z = act(g, x)?;
            let cmp = target.comparison(&z);
            let row = thresholds
                .iter()
                .enumerate()
                .map(|(i, t)| match t {
                    CachedThreshold::Capped => Some(true),
                    CachedThreshold::Skip => Some(false),
                    CachedThreshold::Bounds(r) => {
                        let Some((quantity, form)) = &cmp else {
                            return Some(false);
                        };
                        let threshold = form.apply(r, MEMBERSHIP_BASE_BITS);
                        match threshold.cmp_rational(quantity) {
                            Some(std::cmp::Ordering::Greater) => Some(true),
                            Some(_) => Some(false),
                            None => {
                                let psi = PsiSpec { a: cache.alphas[i], b: 0.0 };
                                match decide_threshold(g, &psi, *form, quantity) {
                                    Hit::In => Some(true),
                                    Hit::Out => Some(false),
                                    Hit::Unresolved => None,
                                }
                            }
                        }
                    }
                })
                .collect();
            Ok((be.radius, row))
        })
        .collect::<Result<_, TorusError>>()?;

    let n_max = ball.radius as usize;
    let mut new_in_shell = vec![vec![0u64; n_max + 1]; n_alpha];
    let mut unresolved = vec![0u64; n_alpha];
    for (radius, row) in rows {
        for (i, hit) in row.into_iter().enumerate() {
            match hit {
                Some(true) => new_in_shell[i][radius as usize] += 1,
                Some(false) => {}
                None => unresolved[i] += 1,
            }
        }
    }
    let counts = new_in_shell
        .iter()
        .map(|fresh| {
            let mut acc = 0;
            fresh
                .iter()
                .map(|&c| {
                    acc += c;
                    acc
                })
                .collect()
        })
        .collect();
    Ok(ExponentScan {
        alphas: cache.alphas.clone(),
        max_radius: ball.radius,
        counts,
        new_in_shell,
        unresolved,
    })
}

/// One-shot scan without cache reuse.
pub fn exponent_scan(
    ball: &BallIndex,
    x: &TorusPoint,
    target: &TargetFamily,
    alphas: &[f64],
) -> Result<ExponentScan, TorusError> {
    let cache = ScanCache::new(ball, alphas)?;
    exponent_scan_cached(&cache, ball, x, target)
}

/// Least-squares slope of `ln counts[n]` against `n` over `lo..=hi`, using
/// only positive counts; `None` with fewer than two usable points.
pub fn log_count_slope(counts: &[u64], lo: usize, hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (lo..=hi.min(counts.len().saturating_sub(1)))
        .filter(|&n| counts[n] > 0)
        .map(|n| (n as f64, (counts[n] as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
