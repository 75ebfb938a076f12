//! Ball enumeration, shell measures, and growth-rate fitting.
//!
//! Balls `B_n = { g : d(g, e) <= n }` are built by breadth-first closure over
//! generator multiplication with matrix-keyed deduplication.  In the
//! hyperbolic metric the membership cut is the exact integer comparison
//! `F <= floor(e^n + e^-n)`; the closure expands with a configurable slack
//! margin above the target radius because displacement is not monotone along
//! words.  In the word metric the closure is exact by construction.

use crate::interval;
use crate::matrix::{Enclosure, GroupElement, GroupPresentation, MetricMode};
use crate::scalar::Real;
use crate::word::sphere_size;
use num_bigint::BigInt;
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct EnumerationConfig {
    /// Hard cap on stored elements (including the slack margin).
    pub max_elements: usize,
    /// Extra displacement allowed during closure in the hyperbolic metric.
    pub slack: u32,
    /// Width bound for cached displacement enclosures.
    pub displacement_tol: f64,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        EnumerationConfig { max_elements: 10_000_000, slack: 2, displacement_tol: 1e-12 }
    }
}

#[derive(Debug, Error)]
pub enum EnumerateError {
    #[error("element budget exhausted at radius {reached}; largest completed radius {completed:?}")]
    BudgetExceeded {
        completed: Option<u32>,
        reached: u32,
        /// `#B_m` for the completed radii.
        partial_counts: Vec<u64>,
    },
    #[error("freeness violated: {matrix} written as \"{word_a}\" and \"{word_b}\"")]
    FreenessViolation { matrix: String, word_a: String, word_b: String },
}

/// `floor(e^m + e^-m)` for `m = 0..=n`, decided exactly.
pub fn floor_cosh_thresholds(n: u32) -> Vec<BigInt> {
    (0..=n)
        .map(|m| {
            if m == 0 {
                return BigInt::from(2);
            }
            let mut bits = 64;
            loop {
                let iv = interval::cosh_threshold(m, bits);
                let lo = iv.lo.floor().to_integer();
                let hi = iv.hi.floor().to_integer();
                if lo == hi {
                    return lo;
                }
                bits *= 2;
            }
        })
        .collect()
}

/// One stored ball member with its cached metric data.
#[derive(Debug, Clone)]
pub struct BallElement {
    pub element: GroupElement,
    /// Smallest integer radius containing the element.
    pub radius: u32,
    pub displacement: Enclosure,
}

/// An enumerated ball with its growth table.
#[derive(Debug)]
pub struct BallIndex {
    pub presentation: GroupPresentation,
    pub radius: u32,
    elements: Vec<BallElement>,
    /// `counts[m] = #B_m` for `m <= radius`; nondecreasing.
    pub counts: Vec<u64>,
}

impl BallIndex {
    /// Elements sorted by (radius, matrix); deterministic across runs.
    pub fn elements(&self) -> &[BallElement] {
        &self.elements
    }

    pub fn count_at(&self, m: u32) -> u64 {
        self.counts[m as usize]
    }

    /// `(radius, #B_radius)` pairs ready for the growth fit.
    pub fn growth_table(&self) -> Vec<(u32, u64)> {
        self.counts.iter().enumerate().map(|(m, &c)| (m as u32, c)).collect()
    }

    /// Partitions `B_n \ B_0` into bands of width `k` (the last band may be
    /// narrower when `k` does not divide `n`).  Empty bands are reported,
    /// not fatal.
    pub fn shells(&self, k: u32) -> ShellDecomposition {
        assert!(k >= 1, "shell width must be positive");
        let mut bands: Vec<(u32, u32)> = Vec::new();
        let mut hi = k;
        let mut lo = 0;
        while hi < self.radius {
            bands.push((lo, hi));
            lo = hi;
            hi += k;
        }
        if self.radius > 0 {
            bands.push((lo, self.radius));
        }
        let mut shells = Vec::new();
        let mut empty = Vec::new();
        for (lo, hi) in bands {
            let atoms: Vec<GroupElement> = self
                .elements
                .iter()
                .filter(|e| e.radius > lo && e.radius <= hi)
                .map(|e| e.element.clone())
                .collect();
            if atoms.is_empty() {
                empty.push(hi);
                continue;
            }
            let mut shell = ShellMeasure::uniform(hi, hi - lo, atoms)
                .expect("ball bands are symmetric and identity-free");
            if self.presentation.metric_mode == MetricMode::WordLength
                && self.presentation.freeness_assumed
                && hi - lo == 1
                && shell.len() as u64 == sphere_size(self.presentation.rank(), hi as usize)
            {
                shell.word_sphere = Some((self.presentation.rank(), hi));
            }
            shells.push(shell);
        }
        ShellDecomposition { shells, empty }
    }
}

#[derive(Debug)]
pub struct ShellDecomposition {
    pub shells: Vec<ShellMeasure>,
    /// Upper radii of bands that contained no elements.
    pub empty: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("shell measure needs at least one atom")]
    Empty,
    #[error("shell measure may not contain radius-zero elements")]
    ContainsIdentity,
    #[error("shell atoms are not closed under inversion")]
    NotSymmetric,
}

/// Uniform probability measure on a symmetric, identity-free atom set.
#[derive(Debug, Clone)]
pub struct ShellMeasure {
    pub n: u32,
    pub k: u32,
    atoms: Vec<GroupElement>,
    /// Set when the atoms are exactly the full word sphere `S_n` of a free
    /// group: `(rank, n)`.  Unlocks exact radial-chain computations.
    word_sphere: Option<(usize, u32)>,
}

impl ShellMeasure {
    pub fn uniform(n: u32, k: u32, mut atoms: Vec<GroupElement>) -> Result<Self, ShellError> {
        if atoms.is_empty() {
            return Err(ShellError::Empty);
        }
        atoms.sort();
        atoms.dedup();
        if atoms.iter().any(GroupElement::is_identity) {
            return Err(ShellError::ContainsIdentity);
        }
        let set: HashSet<&GroupElement> = atoms.iter().collect();
        if atoms.iter().any(|a| !set.contains(&a.inverse())) {
            return Err(ShellError::NotSymmetric);
        }
        Ok(ShellMeasure { n, k, atoms, word_sphere: None })
    }

    /// Uniform measure on `{g, g^-1}`.
    pub fn symmetric_pair(g: &GroupElement) -> Result<Self, ShellError> {
        Self::uniform(1, 1, vec![g.clone(), g.inverse()])
    }

    pub fn atoms(&self) -> &[GroupElement] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The common atom weight `1 / |atoms|`.
    pub fn weight(&self) -> num_rational::BigRational {
        num_rational::BigRational::new(1.into(), BigInt::from(self.atoms.len()))
    }

    pub fn word_sphere(&self) -> Option<(usize, u32)> {
        self.word_sphere
    }

    pub fn with_word_sphere(mut self, rank: usize, n: u32) -> Self {
        self.word_sphere = Some((rank, n));
        self
    }

    /// Drops the sphere tag, forcing generic code paths; useful for
    /// cross-validating the radial shortcut against plain convolution.
    pub fn without_word_sphere(mut self) -> Self {
        self.word_sphere = None;
        self
    }
}

/// Uniform measure on the symmetric generator set (the simple random walk
/// step distribution).
pub fn srw_measure(p: &GroupPresentation) -> ShellMeasure {
    let atoms = p.symmetric_generators().into_iter().map(|(_, g)| g).collect();
    let mut mu = ShellMeasure::uniform(1, 1, atoms).expect("generator sets are symmetric");
    if p.freeness_assumed {
        mu.word_sphere = Some((p.rank(), 1));
    }
    mu
}

pub fn enumerate_ball(
    p: &GroupPresentation,
    n: u32,
    cfg: &EnumerationConfig,
) -> Result<BallIndex, EnumerateError> {
    match p.metric_mode {
        MetricMode::WordLength => enumerate_word_ball(p, n, cfg),
        MetricMode::HyperbolicDisplacement => enumerate_hyperbolic_ball(p, n, cfg),
    }
}

struct Meta {
    radius: u32,
    complete: bool,
}

fn enumerate_hyperbolic_ball(
    p: &GroupPresentation,
    n: u32,
    cfg: &EnumerationConfig,
) -> Result<BallIndex, EnumerateError> {
    assert_eq!(p.dim(), 2, "hyperbolic enumeration is defined for d = 2");
    let thresholds = floor_cosh_thresholds(n + cfg.slack);
    let radius_of = |f: &BigInt| -> u32 { thresholds.partition_point(|t| t < f) as u32 };
    let sym = p.symmetric_generators();
    let mut map: HashMap<GroupElement, Meta> = HashMap::new();
    map.insert(GroupElement::identity(2), Meta { radius: 0, complete: false });

    let partial = |map: &HashMap<GroupElement, Meta>, upto: u32| -> Vec<u64> {
        let mut counts = vec![0u64; upto as usize + 1];
        for meta in map.values() {
            if meta.radius <= upto {
                counts[meta.radius as usize] += 1;
            }
        }
        for m in 1..counts.len() {
            counts[m] += counts[m - 1];
        }
        counts
    };

    for stage in 0..=n {
        let cap = &thresholds[(stage + cfg.slack) as usize];
        let mut queue: Vec<GroupElement> = map
            .iter()
            .filter(|(_, meta)| !meta.complete)
            .map(|(g, _)| g.clone())
            .collect();
        while let Some(g) = queue.pop() {
            let mut all_in = true;
            for (_, s) in &sym {
                let h = g.compose(s).expect("uniform dimension");
                let f = h.frobenius_sq();
                if &f > cap {
                    all_in = false;
                    continue;
                }
                if let Some((existing, _)) = map.get_key_value(&h) {
                    if p.freeness_assumed {
                        if let (Some(wa), Some(wb)) = (existing.word(), h.word()) {
                            if wa != wb {
                                return Err(EnumerateError::FreenessViolation {
                                    matrix: h.to_string(),
                                    word_a: wa.to_string(),
                                    word_b: wb.to_string(),
                                });
                            }
                        }
                    }
                    continue;
                }
                if map.len() >= cfg.max_elements {
                    let completed = stage.checked_sub(1);
                    return Err(EnumerateError::BudgetExceeded {
                        completed,
                        reached: stage,
                        partial_counts: completed.map(|c| partial(&map, c)).unwrap_or_default(),
                    });
                }
                let radius = radius_of(&f);
                queue.push(h.clone());
                map.insert(h, Meta { radius, complete: false });
            }
            if all_in {
                map.get_mut(&g).expect("queued elements are stored").complete = true;
            }
        }
    }

    let counts = partial(&map, n);
    let mut members: Vec<(GroupElement, u32)> = map
        .into_iter()
        .filter(|(_, meta)| meta.radius <= n)
        .map(|(g, meta)| (g, meta.radius))
        .collect();
    members.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let tol = cfg.displacement_tol;
    let elements: Vec<BallElement> = members
        .into_par_iter()
        .map(|(element, radius)| {
            let displacement = element.displacement_with_tol(tol);
            BallElement { element, radius, displacement }
        })
        .collect();
    Ok(BallIndex { presentation: p.clone(), radius: n, elements, counts })
}

fn enumerate_word_ball(
    p: &GroupPresentation,
    n: u32,
    cfg: &EnumerationConfig,
) -> Result<BallIndex, EnumerateError> {
    let sym = p.symmetric_generators();
    let mut map: HashMap<GroupElement, u32> = HashMap::new();
    let identity = GroupElement::identity(p.dim());
    map.insert(identity.clone(), 0);
    let mut frontier = vec![identity];
    let mut counts = vec![1u64];
    for len in 1..=n {
        let mut next = Vec::new();
        for g in &frontier {
            for (l, s) in &sym {
                if let Some(w) = g.word() {
                    if w.letters().last() == Some(&-l) {
                        continue;
                    }
                }
                let h = g.compose(s).expect("uniform dimension");
                if let Some((existing, _)) = map.get_key_value(&h) {
                    if p.freeness_assumed {
                        // Distinct reduced words never collide in a free group.
                        return Err(EnumerateError::FreenessViolation {
                            matrix: h.to_string(),
                            word_a: existing
                                .word()
                                .map(|w| w.to_string())
                                .unwrap_or_default(),
                            word_b: h.word().map(|w| w.to_string()).unwrap_or_default(),
                        });
                    }
                    continue;
                }
                if map.len() >= cfg.max_elements {
                    return Err(EnumerateError::BudgetExceeded {
                        completed: Some(len - 1),
                        reached: len,
                        partial_counts: counts,
                    });
                }
                map.insert(h.clone(), len);
                next.push(h);
            }
        }
        counts.push(counts.last().unwrap() + next.len() as u64);
        frontier = next;
    }
    let mut members: Vec<(GroupElement, u32)> = map.into_iter().collect();
    members.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let elements = members
        .into_iter()
        .map(|(element, radius)| BallElement {
            element,
            radius,
            displacement: Enclosure::point(radius as f64),
        })
        .collect();
    Ok(BallIndex { presentation: p.clone(), radius: n, elements, counts })
}

/// Least-squares growth estimate over the largest half of the radii.
#[derive(Debug, Clone)]
pub struct GrowthFit<R: Real> {
    pub delta: R,
    /// Range of consecutive-difference slopes over the fit window.
    pub confidence: (R, R),
    /// `(radius, log count)` pairs actually fitted.
    pub points_used: Vec<(u32, R)>,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("growth fit needs at least {0} positive counts, got {1}")]
    TooFewPoints(usize, usize),
}

pub fn fit_critical_exponent<R: Real>(counts: &[(u32, u64)]) -> Result<GrowthFit<R>, FitError> {
    let pts: Vec<(u32, R)> = counts
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(m, c)| (*m, R::from_f64_lossy(*c as f64).ln()))
        .collect();
    if pts.len() < 4 {
        return Err(FitError::TooFewPoints(4, pts.len()));
    }
    let window = &pts[pts.len() / 2..];
    let len = R::from_f64_lossy(window.len() as f64);
    let mut xbar = R::zero();
    let mut ybar = R::zero();
    for &(x, y) in window {
        xbar += R::from_f64_lossy(x as f64);
        ybar += y;
    }
    xbar /= len;
    ybar /= len;
    let mut num = R::zero();
    let mut den = R::zero();
    for &(x, y) in window {
        let dx = R::from_f64_lossy(x as f64) - xbar;
        num += dx * (y - ybar);
        den += dx * dx;
    }
    let delta = num / den;
    // The least-squares slope is a convex combination of the pairwise
    // slopes, so the consecutive-difference range encloses it.
    let mut lo = R::infinity();
    let mut hi = R::neg_infinity();
    for w in window.windows(2) {
        let dx = R::from_f64_lossy((w[1].0 - w[0].0) as f64);
        let s = (w[1].1 - w[0].1) / dx;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok(GrowthFit {
        delta,
        confidence: (lo.min(delta), hi.max(delta)),
        points_used: window.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{sanov_presentation, sanov_word_presentation};

    #[test]
    fn word_ball_counts() {
        let p = sanov_word_presentation();
        let b = enumerate_ball(&p, 2, &EnumerationConfig::default()).unwrap();
        assert_eq!(b.counts, vec![1, 5, 17]);
        assert_eq!(b.elements().len(), 17);
        let b0 = enumerate_ball(&p, 0, &EnumerationConfig::default()).unwrap();
        assert_eq!(b0.elements().len(), 1);
        assert!(b0.elements()[0].element.is_identity());
    }

    #[test]
    fn word_shells_are_spheres() {
        let p = sanov_word_presentation();
        let b = enumerate_ball(&p, 3, &EnumerationConfig::default()).unwrap();
        let dec = b.shells(1);
        assert!(dec.empty.is_empty());
        let sizes: Vec<usize> = dec.shells.iter().map(ShellMeasure::len).collect();
        assert_eq!(sizes, vec![4, 12, 36]);
        assert_eq!(dec.shells[2].word_sphere(), Some((2, 3)));
        // Width k = n collapses everything into one shell.
        let whole = b.shells(3);
        assert_eq!(whole.shells.len(), 1);
        assert_eq!(whole.shells[0].len() as u64, b.count_at(3) - 1);
    }

    #[test]
    fn hyperbolic_counts_match_frozen_table() {
        let p = sanov_presentation();
        let b = enumerate_ball(&p, 8, &EnumerationConfig::default()).unwrap();
        assert_eq!(b.counts, vec![1, 1, 5, 13, 25, 73, 221, 533, 1473]);
        // Radii agree with the exact membership predicate.
        for e in b.elements().iter().step_by(97) {
            assert!(e.element.ball_membership(e.radius));
            if e.radius > 0 {
                assert!(!e.element.ball_membership(e.radius - 1));
            }
        }
    }

    #[test]
    fn hyperbolic_ball_matches_brute_force_at_radius_four() {
        // Independent oracle: scan all integer matrices with F <= e^4 + e^-4
        // and keep those reachable as words in the generators.  The membership
        // search is a word-metric ball, a disjoint code path from the
        // hyperbolic closure.
        let thresholds = floor_cosh_thresholds(4);
        assert_eq!(thresholds[4], BigInt::from(54));
        let wordball = enumerate_ball(
            &sanov_word_presentation(),
            10,
            &EnumerationConfig { max_elements: 1_000_000, ..Default::default() },
        )
        .unwrap();
        let by_matrix: HashMap<&GroupElement, u32> =
            wordball.elements().iter().map(|e| (&e.element, e.radius)).collect();
        let mut brute = Vec::new();
        for a in -8i64..=8 {
            for b in (-8i64..=8).step_by(2) {
                for c in (-8i64..=8).step_by(2) {
                    for d in -8i64..=8 {
                        if a * d - b * c != 1 || a * a + b * b + c * c + d * d > 54 {
                            continue;
                        }
                        let g = GroupElement::from_rows_2([[a, b], [c, d]]).unwrap();
                        if let Some(&len) = by_matrix.get(&g) {
                            // Margin check: every hit must be far from the
                            // search depth, else depth 10 might be too small.
                            assert!(len <= 7, "candidate at word length {len}");
                            brute.push(g);
                        }
                    }
                }
            }
        }
        brute.sort();
        let hyp = enumerate_ball(&sanov_presentation(), 4, &EnumerationConfig::default()).unwrap();
        let mut got: Vec<GroupElement> =
            hyp.elements().iter().map(|e| e.element.clone()).collect();
        got.sort();
        assert_eq!(got, brute);
    }

    #[test]
    fn sanov_shells_width_two_nonempty() {
        let p = sanov_presentation();
        let b = enumerate_ball(&p, 10, &EnumerationConfig::default()).unwrap();
        let dec = b.shells(2);
        assert!(dec.empty.is_empty());
        assert_eq!(dec.shells.len(), 5);
        for s in &dec.shells {
            assert!(s.len() > 0);
        }
        // Width 1 leaves the first band empty (no displacement below 1).
        let dec1 = b.shells(1);
        assert_eq!(dec1.empty, vec![1]);
    }

    #[test]
    fn budget_produces_partial_error() {
        let p = sanov_presentation();
        let err = enumerate_ball(
            &p,
            8,
            &EnumerationConfig { max_elements: 40, ..Default::default() },
        )
        .unwrap_err();
        match err {
            EnumerateError::BudgetExceeded { completed, partial_counts, .. } => {
                let completed = completed.expect("small balls fit in 40 elements");
                assert!(completed >= 2);
                let expected = [1u64, 1, 5, 13, 25];
                assert_eq!(
                    partial_counts,
                    expected[..=completed as usize].to_vec()
                );
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn freeness_audit_fires() {
        use crate::matrix::MetricMode;
        let a = GroupElement::from_rows_2([[1, 2], [0, 1]]).unwrap();
        let a2 = GroupElement::from_rows_2([[1, 4], [0, 1]]).unwrap();
        let p = GroupPresentation::new(vec![a.clone(), a2.clone()], MetricMode::WordLength, true)
            .unwrap();
        assert!(matches!(
            enumerate_ball(&p, 3, &EnumerationConfig::default()),
            Err(EnumerateError::FreenessViolation { .. })
        ));
        // Without the freeness claim the same input deduplicates quietly.
        let q = GroupPresentation::new(vec![a, a2], MetricMode::WordLength, false).unwrap();
        let ball = enumerate_ball(&q, 3, &EnumerationConfig::default()).unwrap();
        // <A, A^2> = <A> is infinite cyclic: B_n = translates A^j, |j| <= 2n.
        assert_eq!(ball.counts, vec![1, 5, 9, 13]);
    }

    #[test]
    fn shell_measure_validation() {
        let a = GroupElement::from_rows_2([[1, 2], [0, 1]]).unwrap();
        assert!(matches!(ShellMeasure::uniform(1, 1, vec![]), Err(ShellError::Empty)));
        assert!(matches!(
            ShellMeasure::uniform(1, 1, vec![GroupElement::identity(2)]),
            Err(ShellError::ContainsIdentity)
        ));
        assert!(matches!(
            ShellMeasure::uniform(1, 1, vec![a.clone()]),
            Err(ShellError::NotSymmetric)
        ));
        let pair = ShellMeasure::symmetric_pair(&a).unwrap();
        assert_eq!(pair.len(), 2);
        assert_eq!(
            pair.weight(),
            num_rational::BigRational::new(1.into(), 2.into())
        );
        // An involution collapses to a single atom and stays symmetric.
        let rot = GroupElement::from_rows_2([[0, -1], [1, 0]]).unwrap();
        let inv2 = rot.compose(&rot).unwrap(); // -I, order 2
        let half_turn = ShellMeasure::symmetric_pair(&inv2).unwrap();
        assert_eq!(half_turn.len(), 1);
    }

    #[test]
    fn growth_fit_word_metric_is_log_three() {
        let counts: Vec<(u32, u64)> =
            (1..=10).map(|m| (m, sphere_size(2, m as usize))).collect();
        let fit: GrowthFit<f64> = fit_critical_exponent(&counts).unwrap();
        assert!((fit.delta - 3f64.ln()).abs() < 1e-12);
        assert!(fit.confidence.0 <= fit.delta && fit.delta <= fit.confidence.1);
        assert!((fit.confidence.1 - fit.confidence.0).abs() < 1e-12);
    }

    #[test]
    fn growth_fit_edge_cases() {
        let constant: Vec<(u32, u64)> = (0..8).map(|m| (m, 7)).collect();
        let fit: GrowthFit<f64> = fit_critical_exponent(&constant).unwrap();
        assert_eq!(fit.delta, 0.0);
        assert!(matches!(
            fit_critical_exponent::<f64>(&[(0, 1), (1, 2), (2, 4)]),
            Err(FitError::TooFewPoints(4, 3))
        ));
    }

    #[test]
    fn growth_fit_sanov_near_one() {
        let p = sanov_presentation();
        let b = enumerate_ball(&p, 10, &EnumerationConfig::default()).unwrap();
        let fit: GrowthFit<f64> = fit_critical_exponent(&b.growth_table()).unwrap();
        assert!((fit.delta - 1.0).abs() < 0.1, "delta = {}", fit.delta);
    }
}
