//! Tree model of the boundary at infinity of a free group.
//!
//! For the free group `F_m` with the word metric, the boundary is the space
//! of infinite reduced words, the conformal density of dimension
//! `log(2m - 1)` is the uniform cylinder measure, and every hyperbolicity
//! constant collapses to its trivial value.  That makes shadows, Busemann
//! cocycles, level sets, and the boundary-representation matrix exactly
//! computable, so the norm certificate can be checked without any floating
//! error budget.
//!
//! Throughout, `q = 2m - 1` is the branching factor and values with
//! half-integer `q`-exponents live in the quadratic extension `Q[sqrt(q)]`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use thiserror::Error;

use crate::quad::QuadExt;
use crate::word::{sphere_size, sphere_words, Word};

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("free rank must be at least 2, got {0}")]
    RankTooSmall(usize),
    #[error("shadow prefix must be a nonempty reduced word")]
    EmptyPrefix,
    #[error("matrix radius {r} must exceed the measure level {n}")]
    RadiusOrder { r: u32, n: u32 },
    #[error("level-0 sphere is empty; the measure level must be at least 1")]
    ShellEmpty,
    #[error("sphere of size {size} exceeds the budget {budget}")]
    BudgetExceeded { size: u64, budget: u64 },
    #[error("level index {a} outside 0..={n}")]
    LevelOutOfRange { a: u32, n: u32 },
    #[error("measure atoms must share one positive word length")]
    MixedAtomLengths,
}

/// Constants of the geometric model.  In a tree the quasiruler is exact
/// (`lambda = 1`, `c = 0`), geodesics are `0`-thin, the shadow lemma has no
/// error term, and the Busemann comparison slack can be taken to be zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConstants {
    pub lambda: u32,
    pub c: u32,
    pub tau: u32,
    pub thinness: u32,
    pub shadow: u32,
    pub busemann_slack: u32,
}

/// The boundary of `F_m` with its conformal measure.
#[derive(Debug, Clone)]
pub struct BoundaryModel {
    rank: usize,
    busemann_slack: u32,
}

impl BoundaryModel {
    pub fn new(rank: usize) -> Result<Self, BoundaryError> {
        Self::with_slack(rank, 0)
    }

    /// Same model with a nonzero Busemann comparison slack; the level sets
    /// then use half-open windows instead of exact level values.
    pub fn with_slack(rank: usize, busemann_slack: u32) -> Result<Self, BoundaryError> {
        if rank < 2 {
            return Err(BoundaryError::RankTooSmall(rank));
        }
        Ok(BoundaryModel { rank, busemann_slack })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Branching factor `q = 2m - 1`: the exact base of the growth rate.
    pub fn growth_base(&self) -> u64 {
        2 * self.rank as u64 - 1
    }

    /// Critical exponent `log(2m - 1)`.
    pub fn delta(&self) -> f64 {
        (self.growth_base() as f64).ln()
    }

    pub fn constants(&self) -> ModelConstants {
        ModelConstants {
            lambda: 1,
            c: 0,
            tau: 0,
            thinness: 0,
            shadow: 0,
            busemann_slack: self.busemann_slack,
        }
    }

    pub fn shadow(&self, prefix: Word) -> Result<CylinderShadow, BoundaryError> {
        if prefix.is_empty() {
            return Err(BoundaryError::EmptyPrefix);
        }
        Ok(CylinderShadow { prefix })
    }

    /// Conformal measure of a cylinder: `(2m)^-1 q^-(len-1)`.
    pub fn ps_measure(&self, c: &CylinderShadow) -> BigRational {
        let q = BigInt::from(self.growth_base());
        let denom = BigInt::from(2 * self.rank as u64) * q.pow(c.prefix.len() as u32 - 1);
        BigRational::new(BigInt::one(), denom)
    }

    /// All reduced words of exact length `n`.
    pub fn sphere(&self, n: u32) -> Vec<Word> {
        sphere_words(self.rank, n as usize).collect()
    }

    /// Elements of `S_n` whose Busemann cocycle against `g` sits at level
    /// `a`, window-widened by `slack`:
    /// `n - 2a - slack < -busemann(g, h) <= n - 2a`.
    ///
    /// With zero slack this is exactly `{h : gromov_product(g, h) = n - a}`.
    pub fn x_a_set(
        &self,
        g: &Word,
        n: u32,
        a: u32,
        slack: u32,
    ) -> Result<Vec<Word>, BoundaryError> {
        if g.len() as u32 <= n {
            return Err(BoundaryError::RadiusOrder { r: g.len() as u32, n });
        }
        if a > n {
            return Err(BoundaryError::LevelOutOfRange { a, n });
        }
        // The cocycle value has the parity of n, so the slack-0 window
        // degenerates to the exact level value (same set as slack 1).
        let hi = n as i64 - 2 * a as i64;
        let lo = hi - i64::from(slack.max(1));
        Ok(sphere_words(self.rank, n as usize)
            .filter(|h| {
                let neg_b = -busemann(g, h);
                lo < neg_b && neg_b <= hi
            })
            .collect())
    }

    /// Uniform measure on `S_n` as the boundary-representation matrix over
    /// the length-`r` cylinder basis.
    pub fn build_pi_matrix(&self, r: u32, n: u32, budget: u64) -> Result<PiMatrix, BoundaryError> {
        if n == 0 {
            return Err(BoundaryError::ShellEmpty);
        }
        let atoms: Vec<Word> = sphere_words(self.rank, n as usize).collect();
        self.build_pi_matrix_for(r, &atoms, budget)
    }

    /// Boundary-representation matrix of the uniform measure on an explicit
    /// atom list (all atoms reduced words of one common length below `r`).
    pub fn build_pi_matrix_for(
        &self,
        r: u32,
        atoms: &[Word],
        budget: u64,
    ) -> Result<PiMatrix, BoundaryError> {
        let Some(first) = atoms.first() else {
            return Err(BoundaryError::ShellEmpty);
        };
        let n = first.len() as u32;
        if n == 0 || atoms.iter().any(|h| h.len() as u32 != n) {
            return Err(BoundaryError::MixedAtomLengths);
        }
        if r <= n {
            return Err(BoundaryError::RadiusOrder { r, n });
        }
        let size = sphere_size(self.rank, r as usize);
        if size > budget {
            return Err(BoundaryError::BudgetExceeded { size, budget });
        }

        let basis: Vec<Word> = sphere_words(self.rank, r as usize).collect();
        let index: HashMap<&Word, usize> = basis.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let q = self.growth_base();
        let dim = basis.len();
        let mut entries = vec![QuadExt::zero(q); dim * dim];
        // Weight of one term: the measure atom weight 1/|atoms| times the
        // cylinder normalization (2m)^-1, times q^(t/2) with
        // t = 2((w|h) - |w| + 1) - n for the intersection cylinder w.
        let scale = BigRational::new(
            BigInt::one(),
            BigInt::from(2 * self.rank as u64) * BigInt::from(atoms.len() as u64),
        );
        let mut powers: BTreeMap<i64, QuadExt> = BTreeMap::new();
        let mut term = |t: i64| -> QuadExt {
            powers
                .entry(t)
                .or_insert_with(|| QuadExt::one(q).mul_sqrt_pow(t).scale(&scale))
                .clone()
        };

        for h in atoms {
            for (i, w_i) in basis.iter().enumerate() {
                // Rays through the shifted cylinder h O_i form the cylinder
                // of the reduced product; r > n keeps it nonempty.
                let v = h.concat(w_i);
                debug_assert!(v.len() >= (r - n) as usize);
                if v.len() >= r as usize {
                    // The image cylinder refines one basis cylinder O_j.
                    let j = index[&v.prefix(r as usize)];
                    let overlap = v.common_prefix_len(h) as i64;
                    let t = 2 * (overlap - v.len() as i64 + 1) - n as i64;
                    entries[j * dim + i].add_assign(&term(t));
                } else {
                    // The image cylinder is coarser: spread over every basis
                    // cylinder that extends it.
                    extend_to_length(self.rank, &v, r as usize, &mut |w_j| {
                        let j = index[w_j];
                        let overlap = w_j.common_prefix_len(h) as i64;
                        let t = 2 * (overlap - r as i64 + 1) - n as i64;
                        entries[j * dim + i].add_assign(&term(t));
                    });
                }
            }
        }

        Ok(PiMatrix { rank: self.rank, r, n, dim, entries })
    }

    /// Exact maximal column sum of the uniform level-`n` matrix, computed
    /// without materializing entries: since the shifted cylinders partition
    /// the boundary, the sum along one basis cylinder `O_j` collapses to
    /// `sum_h q^((w_j|h)) * rho(O_j) * q^(-n/2) / |S_n|` (the uniform level
    /// measure is symmetric, so row and column sums coincide).
    pub fn max_column_sum(&self, r: u32, n: u32) -> Result<QuadExt, BoundaryError> {
        if n == 0 {
            return Err(BoundaryError::ShellEmpty);
        }
        if r <= n {
            return Err(BoundaryError::RadiusOrder { r, n });
        }
        let q = self.growth_base();
        let atoms: Vec<Word> = sphere_words(self.rank, n as usize).collect();
        let mut q_pow = vec![1u128; n as usize + 1];
        for t in 1..=n as usize {
            q_pow[t] = q_pow[t - 1] * q as u128;
        }
        let mut best: u128 = 0;
        for w_j in sphere_words(self.rank, r as usize) {
            let mut acc: u128 = 0;
            for h in &atoms {
                acc += q_pow[w_j.common_prefix_len(h)];
            }
            best = best.max(acc);
        }
        // best * rho_r * q^(-n/2) / |S_n|.
        let rho_r = BigRational::new(
            BigInt::one(),
            BigInt::from(2 * self.rank as u64) * BigInt::from(q).pow(r - 1),
        );
        let shell = BigInt::from(sphere_size(self.rank, n as usize));
        let scale = BigRational::from_integer(BigInt::from(best)) * rho_r
            / BigRational::from_integer(shell);
        Ok(QuadExt::from_rational(scale, q).mul_sqrt_pow(-(n as i64)))
    }
}

/// Enumerates reduced extensions of `base` to exact length `target`.
fn extend_to_length(rank: usize, base: &Word, target: usize, visit: &mut impl FnMut(&Word)) {
    fn rec(rank: usize, w: &Word, target: usize, visit: &mut impl FnMut(&Word)) {
        if w.len() == target {
            visit(w);
            return;
        }
        let last = *w.letters().last().expect("base is nonempty");
        for k in 1..=rank as i32 {
            for l in [k, -k] {
                if l != -last {
                    rec(rank, &w.push(l), target, visit);
                }
            }
        }
    }
    assert!(!base.is_empty() && base.len() <= target);
    rec(rank, base, target, visit);
}

/// Shadow of a group element: the rays extending its word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CylinderShadow {
    prefix: Word,
}

impl CylinderShadow {
    pub fn prefix(&self) -> &Word {
        &self.prefix
    }
}

/// Longest common prefix; equals the metric expression
/// `(|u| + |v| - d(u, v)) / 2` on the tree.
pub fn gromov_product(u: &Word, v: &Word) -> usize {
    let p = u.common_prefix_len(v);
    debug_assert_eq!(2 * p, u.len() + v.len() - u.inverse().concat(v).len());
    p
}

/// Busemann cocycle `d(g, h) - d(g, e)`, reduced by the tree identity to
/// `|h| - 2 (g|h)`.
pub fn busemann(g: &Word, h: &Word) -> i64 {
    h.len() as i64 - 2 * gromov_product(g, h) as i64
}

/// Exact boundary-representation matrix of a uniform measure on level-`n`
/// words over the length-`r` cylinder basis; entries live in `Q[sqrt(q)]`.
#[derive(Debug, Clone)]
pub struct PiMatrix {
    rank: usize,
    pub r: u32,
    pub n: u32,
    dim: usize,
    entries: Vec<QuadExt>,
}

impl PiMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn entry(&self, i: usize, j: usize) -> &QuadExt {
        &self.entries[i * self.dim + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.entry(i, j) == self.entry(j, i)))
    }

    pub fn all_nonnegative(&self) -> bool {
        self.entries.iter().all(|e| e.sign() != std::cmp::Ordering::Less)
    }

    /// Exact column sums (the entries are nonnegative, so these are the
    /// column l1 norms).
    pub fn column_sums(&self) -> Vec<QuadExt> {
        let q = 2 * self.rank as u64 - 1;
        (0..self.dim)
            .map(|j| {
                let mut acc = QuadExt::zero(q);
                for i in 0..self.dim {
                    acc.add_assign(self.entry(i, j));
                }
                acc
            })
            .collect()
    }

    pub fn max_column_sum(&self) -> QuadExt {
        self.column_sums().into_iter().max().expect("matrix is nonempty")
    }

    pub fn to_dense_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).to_f64())
    }

    /// Spectral norm by dense symmetric eigensolve.
    pub fn dense_spectral_norm(&self) -> f64 {
        let eig = nalgebra::SymmetricEigen::new(self.to_dense_f64());
        eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()))
    }
}

/// One `(r, n)` pair of the norm certificate.
#[derive(Debug, Clone)]
pub struct NormCheck {
    pub r: u32,
    pub n: u32,
    /// Exact maximal column sum `G(r, n)`: a certified upper bound for the
    /// spectral norm.
    pub gershgorin: QuadExt,
    pub gershgorin_f64: f64,
    /// `G(r, n) q^(r + n/2) / n^2`: bounded over pairs by one constant.
    pub ratio: f64,
    /// Dense spectral norm where the basis is small enough to materialize.
    pub dense_spectral: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MatrixNormReport {
    pub rank: usize,
    pub checks: Vec<NormCheck>,
    /// The single constant bounding every ratio.
    pub max_ratio: f64,
}

/// Computes the column-sum norm certificate for each `(r, n)` pair and the
/// one constant bounding all the normalized ratios.  Pairs whose basis fits
/// `dense_budget` also get an independent dense spectral norm, which the
/// certificate must dominate.
pub fn verify_matrixnorm(
    model: &BoundaryModel,
    pairs: &[(u32, u32)],
    dense_budget: u64,
) -> Result<MatrixNormReport, BoundaryError> {
    let mut checks = Vec::with_capacity(pairs.len());
    let mut max_ratio = 0.0f64;
    for &(r, n) in pairs {
        let gershgorin = model.max_column_sum(r, n)?;
        let gershgorin_f64 = gershgorin.to_f64();
        let ratio_exact = gershgorin.mul_sqrt_pow(2 * r as i64 + n as i64).scale(
            &BigRational::new(BigInt::one(), BigInt::from(n as u64 * n as u64)),
        );
        let ratio = ratio_exact.to_f64();
        let dense_spectral = if sphere_size(model.rank(), r as usize) <= dense_budget {
            let pi = model.build_pi_matrix(r, n, dense_budget)?;
            debug_assert_eq!(pi.max_column_sum(), gershgorin);
            Some(pi.dense_spectral_norm())
        } else {
            None
        };
        max_ratio = max_ratio.max(ratio);
        checks.push(NormCheck { r, n, gershgorin, gershgorin_f64, ratio, dense_spectral });
    }
    Ok(MatrixNormReport { rank: model.rank(), checks, max_ratio })
}

/// Counts reduced words of exact length `n` by walking the tree, without
/// allocating the words.
pub fn count_sphere_walk(rank: usize, n: u32) -> u64 {
    assert!(rank >= 1);
    fn rec(rank: usize, prev: i32, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        let mut total = 0;
        for k in 1..=rank as i32 {
            for l in [k, -k] {
                if l != -prev {
                    total += rec(rank, l, depth - 1);
                }
            }
        }
        total
    }
    rec(rank, 0, n)
}
