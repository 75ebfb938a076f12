//! Exact arithmetic on unimodular integer matrices.
//!
//! A [`GroupElement`] is a `d x d` integer matrix of determinant one with an
//! optional generator word.  Equality, hashing, and ordering ignore the word:
//! words are bookkeeping, matrices are identity.  Norm comparisons go through
//! the integer `F = sum of squared entries`, never through floating-point
//! norms, so ball boundaries are reproducible everywhere.
//!
//! For `d = 2` the hyperbolic displacement of the basepoint is
//! `2 log sigma_max`, computed from `sigma_max^2 = (F + sqrt(F^2 - 4)) / 2`
//! with directed rounding and precision escalation.

use crate::interval::{self, RatInterval};
use crate::word::Word;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}x{0} vs {1}x{1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix has determinant {0}, expected 1")]
    NotUnimodular(BigInt),
    #[error("entry grid must be square, got {0} entries")]
    NotSquare(usize),
}

/// Default width for displacement enclosures.
pub const DEFAULT_DISPLACEMENT_TOL: f64 = 1e-12;

/// A two-sided `f64` bound on an exactly-defined real quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enclosure {
    pub lo: f64,
    pub hi: f64,
}

impl Enclosure {
    pub fn point(x: f64) -> Self {
        Enclosure { lo: x, hi: x }
    }

    pub fn value(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub(crate) fn from_rat(iv: &RatInterval) -> Self {
        Enclosure {
            lo: next_down(interval::rational_to_f64(&iv.lo)),
            hi: next_up(interval::rational_to_f64(&iv.hi)),
        }
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    let bits = if x == 0.0 { 1 } else if x > 0.0 { x.to_bits() + 1 } else { x.to_bits() - 1 };
    f64::from_bits(bits)
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// An element of `SL_d(Z)`; instances are immutable and freely shareable.
#[derive(Debug, Clone)]
pub struct GroupElement {
    dim: usize,
    entries: Vec<BigInt>,
    word: Option<Word>,
}

impl PartialEq for GroupElement {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl Eq for GroupElement {}

impl std::hash::Hash for GroupElement {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        self.entries.hash(state);
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl GroupElement {
    /// Builds an element from row-major entries, checking `det = 1`.
    pub fn from_entries(dim: usize, entries: Vec<BigInt>) -> Result<Self, MatrixError> {
        if entries.len() != dim * dim {
            return Err(MatrixError::NotSquare(entries.len()));
        }
        let d = det(dim, &entries);
        if !d.is_one() {
            return Err(MatrixError::NotUnimodular(d));
        }
        Ok(GroupElement { dim, entries, word: None })
    }

    /// Convenience constructor for 2x2 matrices.
    pub fn from_rows_2(rows: [[i64; 2]; 2]) -> Result<Self, MatrixError> {
        let entries = rows.iter().flatten().map(|&x| BigInt::from(x)).collect();
        Self::from_entries(2, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![BigInt::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = BigInt::one();
        }
        GroupElement { dim, entries, word: Some(Word::identity()) }
    }

    pub fn with_word(mut self, word: Word) -> Self {
        self.word = Some(word);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.dim + j]
    }

    pub fn word(&self) -> Option<&Word> {
        self.word.as_ref()
    }

    pub fn is_identity(&self) -> bool {
        self.entries
            .iter()
            .enumerate()
            .all(|(k, e)| if k % (self.dim + 1) == 0 { e.is_one() } else { e.is_zero() })
    }

    pub fn is_neg_identity(&self) -> bool {
        self.entries.iter().enumerate().all(|(k, e)| {
            if k % (self.dim + 1) == 0 {
                *e == BigInt::from(-1)
            } else {
                e.is_zero()
            }
        })
    }

    pub fn negate(&self) -> Self {
        GroupElement {
            dim: self.dim,
            entries: self.entries.iter().map(|e| -e).collect(),
            word: None,
        }
    }

    /// Matrix product; words concatenate with free reduction.
    pub fn compose(&self, other: &Self) -> Result<Self, MatrixError> {
        if self.dim != other.dim {
            return Err(MatrixError::DimensionMismatch(self.dim, other.dim));
        }
        let d = self.dim;
        let mut entries = vec![BigInt::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = &self.entries[i * d + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += a * &other.entries[k * d + j];
                }
            }
        }
        let word = match (&self.word, &other.word) {
            (Some(u), Some(v)) => Some(u.concat(v)),
            _ => None,
        };
        Ok(GroupElement { dim: d, entries, word })
    }

    /// Inverse via the adjugate (valid because `det = 1`).
    pub fn inverse(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![BigInt::zero(); d * d];
        if d == 1 {
            entries[0] = self.entries[0].clone();
        } else {
            for i in 0..d {
                for j in 0..d {
                    let minor = self.minor(j, i);
                    let cof = det(d - 1, &minor);
                    entries[i * d + j] = if (i + j) % 2 == 0 { cof } else { -cof };
                }
            }
        }
        GroupElement {
            dim: d,
            entries,
            word: self.word.as_ref().map(Word::inverse),
        }
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> Vec<BigInt> {
        let d = self.dim;
        let mut out = Vec::with_capacity((d - 1) * (d - 1));
        for i in 0..d {
            if i == skip_row {
                continue;
            }
            for j in 0..d {
                if j == skip_col {
                    continue;
                }
                out.push(self.entries[i * d + j].clone());
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![BigInt::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j].clone();
            }
        }
        GroupElement { dim: d, entries, word: None }
    }

    pub fn trace(&self) -> BigInt {
        (0..self.dim).map(|i| self.entries[i * self.dim + i].clone()).sum()
    }

    /// `F = ||g||_Frobenius^2`, the exact integer driving all norm tests.
    pub fn frobenius_sq(&self) -> BigInt {
        self.entries.iter().map(|e| e * e).sum()
    }

    /// Hyperbolic displacement `2 log sigma_max` of the basepoint (d = 2),
    /// enclosed to width below `DEFAULT_DISPLACEMENT_TOL`.
    pub fn displacement(&self) -> Enclosure {
        self.displacement_with_tol(DEFAULT_DISPLACEMENT_TOL)
    }

    /// As [`displacement`](Self::displacement) with a caller-chosen width.
    pub fn displacement_with_tol(&self, tol: f64) -> Enclosure {
        let tol_rat = BigRational::from_float(tol).expect("finite tolerance");
        let mut bits = 96u32;
        loop {
            let Some(d) = self.displacement_interval(bits) else {
                // sigma_max = 1 exactly (orthogonal elements).
                return Enclosure::point(0.0);
            };
            if d.width() < tol_rat {
                return Enclosure::from_rat(&d);
            }
            bits *= 2;
        }
    }

    /// Rational enclosure of the displacement at a fixed working precision,
    /// or `None` when the displacement is exactly zero.
    pub fn displacement_interval(&self, bits: u32) -> Option<RatInterval> {
        assert_eq!(self.dim, 2, "displacement metric is defined for d = 2");
        let f = self.frobenius_sq();
        let two = BigInt::from(2);
        debug_assert!(f >= two, "SL2(Z) forces F >= 2");
        if f == two {
            return None;
        }
        let f_rat = BigRational::from_integer(f.clone());
        let disc = BigRational::from_integer(&f * &f - BigInt::from(4));
        // sigma_max^2 = (F + sqrt(F^2 - 4)) / 2, then one natural log.
        let root = interval::sqrt(&disc, bits);
        let sigma_sq = root
            .add(&RatInterval::point(f_rat))
            .scale(&BigRational::new(1.into(), 2.into()));
        Some(interval::ln_interval(&sigma_sq, bits))
    }

    /// Exact decision of `d(g, e) <= n`, i.e. `F <= e^n + e^-n`.
    ///
    /// For `n >= 1` the threshold is irrational while `F` is an integer, so
    /// escalating interval precision always separates them.
    pub fn ball_membership(&self, n: u32) -> bool {
        assert_eq!(self.dim, 2, "ball membership is defined for d = 2");
        let f = self.frobenius_sq();
        if n == 0 {
            return f <= BigInt::from(2);
        }
        let f_rat = BigRational::from_integer(f);
        // Ordering of the threshold relative to F: Greater means F < e^n + e^-n.
        interval::decide_cmp(&f_rat, |bits| interval::cosh_threshold(n, bits))
            == Ordering::Greater
    }

    /// Parabolic test: `|trace| = 2` and `g` is not `+-identity`.
    pub fn is_parabolic(&self) -> bool {
        assert_eq!(self.dim, 2, "parabolicity test is defined for d = 2");
        self.trace().abs() == BigInt::from(2) && !self.is_identity() && !self.is_neg_identity()
    }

    /// Membership in the principal congruence subgroup of level 2.
    pub fn in_principal_congruence_2(&self) -> bool {
        let d = self.dim;
        self.entries.iter().enumerate().all(|(k, e)| {
            let expected_odd = k % (d + 1) == 0;
            let is_odd = e.bit(0);
            is_odd == expected_odd
        })
    }
}

impl std::fmt::Display for GroupElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.dim;
        write!(f, "[")?;
        for i in 0..d {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..d {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.entries[i * d + j])?;
            }
        }
        write!(f, "]")
    }
}

/// Determinant by fraction-free (Bareiss) elimination; exact over `BigInt`.
fn det(dim: usize, entries: &[BigInt]) -> BigInt {
    match dim {
        0 => return BigInt::one(),
        1 => return entries[0].clone(),
        2 => return &entries[0] * &entries[3] - &entries[1] * &entries[2],
        _ => {}
    }
    let mut m = entries.to_vec();
    let mut sign = false;
    let mut prev = BigInt::one();
    for k in 0..dim - 1 {
        if m[k * dim + k].is_zero() {
            let Some(r) = (k + 1..dim).find(|&r| !m[r * dim + k].is_zero()) else {
                return BigInt::zero();
            };
            for c in 0..dim {
                m.swap(k * dim + c, r * dim + c);
            }
            sign = !sign;
        }
        for i in k + 1..dim {
            for j in k + 1..dim {
                let num = &m[i * dim + j] * &m[k * dim + k] - &m[i * dim + k] * &m[k * dim + j];
                m[i * dim + j] = num / &prev;
            }
            m[i * dim + k] = BigInt::zero();
        }
        prev = m[k * dim + k].clone();
    }
    let out = m[dim * dim - 1].clone();
    if sign {
        -out
    } else {
        out
    }
}

/// How distances between group elements are measured during enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    /// `d(g, e) = 2 log ||g||` on `SL_2(Z)`.
    HyperbolicDisplacement,
    /// Reduced word length in the given generators.
    WordLength,
}

/// A finitely generated subgroup given by its generator list.
#[derive(Debug, Clone)]
pub struct GroupPresentation {
    generators: Vec<GroupElement>,
    pub metric_mode: MetricMode,
    pub freeness_assumed: bool,
}

#[derive(Debug, Error)]
pub enum PresentationError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("presentation needs at least one generator")]
    Empty,
    #[error("generators {0} and {1} coincide")]
    DuplicateGenerator(usize, usize),
    #[error("generator {0} equals +-identity")]
    TrivialGenerator(usize),
    #[error("generator {0} has dimension {1}, generator 0 has {2}")]
    MixedDimensions(usize, usize, usize),
    #[error("malformed presentation document: {0}")]
    Document(String),
}

impl GroupPresentation {
    /// Validates distinctness and nontriviality; attaches one-letter words.
    pub fn new(
        generators: Vec<GroupElement>,
        metric_mode: MetricMode,
        freeness_assumed: bool,
    ) -> Result<Self, PresentationError> {
        if generators.is_empty() {
            return Err(PresentationError::Empty);
        }
        let dim = generators[0].dim();
        for (i, g) in generators.iter().enumerate() {
            if g.dim() != dim {
                return Err(PresentationError::MixedDimensions(i, g.dim(), dim));
            }
            if g.is_identity() || g.is_neg_identity() {
                return Err(PresentationError::TrivialGenerator(i));
            }
            for (j, h) in generators.iter().enumerate().take(i) {
                if g == h {
                    return Err(PresentationError::DuplicateGenerator(j, i));
                }
            }
        }
        let generators = generators
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let letter = Word::letter(i as i32 + 1);
                g.with_word(letter)
            })
            .collect();
        Ok(GroupPresentation { generators, metric_mode, freeness_assumed })
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    /// Generators and their inverses, each tagged with its signed letter.
    pub fn symmetric_generators(&self) -> Vec<(i32, GroupElement)> {
        let mut out = Vec::with_capacity(2 * self.generators.len());
        for (i, g) in self.generators.iter().enumerate() {
            let l = i as i32 + 1;
            out.push((l, g.clone()));
            out.push((-l, g.inverse()));
        }
        out
    }

    /// Parses the group document format: `generators` as row-major grids of
    /// decimal strings (plain integers accepted), `metric`, `free`.
    pub fn from_json_str(text: &str) -> Result<Self, PresentationError> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| PresentationError::Document(e.to_string()))?;
        let gens = doc
            .get("generators")
            .and_then(|v| v.as_array())
            .ok_or_else(|| PresentationError::Document("missing \"generators\" array".into()))?;
        let mut generators = Vec::with_capacity(gens.len());
        for (gi, grid) in gens.iter().enumerate() {
            let rows = grid.as_array().ok_or_else(|| {
                PresentationError::Document(format!("generator {gi} is not an array of rows"))
            })?;
            let dim = rows.len();
            let mut entries = Vec::with_capacity(dim * dim);
            for row in rows {
                let cols = row.as_array().ok_or_else(|| {
                    PresentationError::Document(format!("generator {gi}: row is not an array"))
                })?;
                if cols.len() != dim {
                    return Err(PresentationError::Document(format!(
                        "generator {gi}: expected {dim} columns, got {}",
                        cols.len()
                    )));
                }
                for cell in cols {
                    entries.push(parse_bigint_cell(cell).ok_or_else(|| {
                        PresentationError::Document(format!(
                            "generator {gi}: entry {cell} is not an integer"
                        ))
                    })?);
                }
            }
            generators.push(GroupElement::from_entries(dim, entries)?);
        }
        let metric = match doc.get("metric").and_then(|v| v.as_str()) {
            Some("hyperbolic") | None => MetricMode::HyperbolicDisplacement,
            Some("word") => MetricMode::WordLength,
            Some(other) => {
                return Err(PresentationError::Document(format!(
                    "unknown metric \"{other}\" (expected \"hyperbolic\" or \"word\")"
                )))
            }
        };
        let free = doc.get("free").and_then(|v| v.as_bool()).unwrap_or(false);
        GroupPresentation::new(generators, metric, free)
    }

    /// Serializes with decimal-string entries so precision never depends on
    /// the reader's integer width.
    pub fn to_json_string(&self) -> String {
        let gens: Vec<Vec<Vec<String>>> = self
            .generators
            .iter()
            .map(|g| {
                (0..g.dim())
                    .map(|i| (0..g.dim()).map(|j| g.entry(i, j).to_string()).collect())
                    .collect()
            })
            .collect();
        let doc = serde_json::json!({
            "generators": gens,
            "metric": match self.metric_mode {
                MetricMode::HyperbolicDisplacement => "hyperbolic",
                MetricMode::WordLength => "word",
            },
            "free": self.freeness_assumed,
        });
        serde_json::to_string_pretty(&doc).expect("document serializes")
    }
}

fn parse_bigint_cell(cell: &serde_json::Value) -> Option<BigInt> {
    if let Some(s) = cell.as_str() {
        s.trim().parse().ok()
    } else if let Some(i) = cell.as_i64() {
        Some(BigInt::from(i))
    } else {
        None
    }
}

/// The standard free pair `[[1,2],[0,1]]`, `[[1,0],[2,1]]` with the
/// hyperbolic metric.
pub fn sanov_presentation() -> GroupPresentation {
    let a = GroupElement::from_rows_2([[1, 2], [0, 1]]).unwrap();
    let b = GroupElement::from_rows_2([[1, 0], [2, 1]]).unwrap();
    GroupPresentation::new(vec![a, b], MetricMode::HyperbolicDisplacement, true).unwrap()
}

/// The same pair under the word metric (tree model).
pub fn sanov_word_presentation() -> GroupPresentation {
    let a = GroupElement::from_rows_2([[1, 2], [0, 1]]).unwrap();
    let b = GroupElement::from_rows_2([[1, 0], [2, 1]]).unwrap();
    GroupPresentation::new(vec![a, b], MetricMode::WordLength, true).unwrap()
}
