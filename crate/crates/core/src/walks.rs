//! Random-walk functionals: return probabilities, norm lower bounds, drift
//! and entropy estimation.
//!
//! Return probabilities `p_{2k} = mu^{*2k}(e)` are exact rationals.  For
//! uniform sphere measures on a free group they come from the radial
//! distance-to-origin chain, whose transition counts are closed-form; for
//! general atom sets they come from matrix-keyed convolution in the group
//! algebra.  The roots `r_k = p_{2k}^(1/2k)` are nondecreasing lower bounds
//! for the regular-representation norm; a Richardson step on consecutive
//! ratios removes the polynomial prefactor and is reported alongside.

use crate::enumerate::ShellMeasure;
use crate::matrix::GroupElement;
use crate::scalar::Real;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("convolution support budget of {budget} atoms exceeded at step {step}")]
    BudgetExceeded { budget: usize, step: usize },
}

/// Exact distribution over distances to the origin for a walk on a free
/// group of the given rank whose step distribution is uniform on the sphere
/// of radius `step_len`.
#[derive(Debug, Clone)]
pub struct RadialChain {
    rank: usize,
    step_len: u32,
    /// `mass[r]` = probability of being at distance `r`.
    pub mass: Vec<BigRational>,
}

impl RadialChain {
    pub fn new(rank: usize, step_len: u32) -> Self {
        assert!(rank >= 2, "radial chain needs a nonamenable free group");
        assert!(step_len >= 1);
        RadialChain { rank, step_len, mass: vec![BigRational::one()] }
    }

    /// Number of reduced words of length `len` cancelling exactly `j`
    /// letters against a fixed reduced word of length `r`.
    fn cancel_count(rank: usize, len: u32, r: u32, j: u32) -> BigInt {
        let q = BigInt::from(2 * rank as u64 - 1);
        let total = |l: u32| -> BigInt {
            if l == 0 {
                BigInt::one()
            } else {
                BigInt::from(2 * rank as u64) * q.pow(l - 1)
            }
        };
        if r == 0 {
            // Nothing to cancel: the whole sphere moves mass to radius len.
            return if j == 0 { total(len) } else { BigInt::zero() };
        }
        let m = r.min(len);
        if j == 0 {
            q.pow(len)
        } else if j < m {
            (&q - BigInt::one()) * q.pow(len - j - 1)
        } else if j == m {
            if len <= r {
                // Full cancellation of the multiplier: the single inverse tail.
                BigInt::one()
            } else {
                // The word cancels entirely; any reduced continuation follows.
                q.pow(len - r)
            }
        } else {
            BigInt::zero()
        }
    }

    /// Advances the chain by one uniform-sphere step.
    pub fn step(&mut self) {
        let len = self.step_len;
        let total = {
            let q = BigInt::from(2 * self.rank as u64 - 1);
            BigRational::from_integer(BigInt::from(2 * self.rank as u64) * q.pow(len - 1))
        };
        let old_len = self.mass.len();
        let mut next = vec![BigRational::zero(); old_len + len as usize];
        for (r, p) in self.mass.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let r = r as u32;
            for j in 0..=r.min(len) {
                let cnt = Self::cancel_count(self.rank, len, r, j);
                if cnt.is_zero() {
                    continue;
                }
                let new_r = (r + len - 2 * j) as usize;
                next[new_r] += p * BigRational::from_integer(cnt) / &total;
            }
        }
        while next.len() > 1 && next.last().map_or(false, BigRational::is_zero) {
            next.pop();
        }
        self.mass = next;
    }

    pub fn return_probability(&self) -> BigRational {
        self.mass[0].clone()
    }

    /// Exact expected distance to the origin.
    pub fn expected_radius(&self) -> BigRational {
        self.mass
            .iter()
            .enumerate()
            .map(|(r, p)| p * BigRational::from_integer(BigInt::from(r)))
            .sum()
    }
}

/// Sparse measure on group elements with exact rational weights.
#[derive(Debug, Clone)]
pub struct GroupAlgebraVector {
    pub atoms: HashMap<GroupElement, BigRational>,
}

impl GroupAlgebraVector {
    pub fn delta_identity(dim: usize) -> Self {
        let mut atoms = HashMap::new();
        atoms.insert(GroupElement::identity(dim), BigRational::one());
        GroupAlgebraVector { atoms }
    }

    pub fn from_shell(mu: &ShellMeasure) -> Self {
        let w = mu.weight();
        let atoms = mu.atoms().iter().map(|g| (g.clone(), w.clone())).collect();
        GroupAlgebraVector { atoms }
    }

    /// Convolves with `mu`, failing when the support exceeds `budget`.
    pub fn convolve(
        &self,
        mu: &ShellMeasure,
        budget: usize,
        step: usize,
    ) -> Result<Self, WalkError> {
        let w = mu.weight();
        let mut atoms: HashMap<GroupElement, BigRational> = HashMap::new();
        for (g, p) in &self.atoms {
            let contrib = p * &w;
            for s in mu.atoms() {
                let h = g.compose(s).expect("uniform dimension");
                *atoms.entry(h).or_insert_with(BigRational::zero) += &contrib;
                if atoms.len() > budget {
                    return Err(WalkError::BudgetExceeded { budget, step });
                }
            }
        }
        Ok(GroupAlgebraVector { atoms })
    }

    pub fn mass_at_identity(&self) -> BigRational {
        self.atoms
            .iter()
            .find(|(g, _)| g.is_identity())
            .map(|(_, p)| p.clone())
            .unwrap_or_else(BigRational::zero)
    }
}

/// Monotone return-probability lower bounds plus the extrapolated estimate.
#[derive(Debug, Clone)]
pub struct ReturnProbEstimate<R: Real> {
    /// `r_k = p_{2k}^(1/2k)` for `k = 1..=K`; nondecreasing.
    pub roots: Vec<R>,
    /// Exact `p_{2k}`.
    pub probabilities: Vec<BigRational>,
    /// Richardson extrapolation of consecutive ratios; removes the
    /// polynomial factor in `p_{2k} ~ C k^(-3/2) ||lambda||^(2k)`.
    pub extrapolated: R,
    /// True when the budget cut the sequence short.
    pub truncated: bool,
}

impl<R: Real> ReturnProbEstimate<R> {
    /// Best available norm estimate: the extrapolated value, clamped to the
    /// certified-monotone range `[r_K, 1]`.
    pub fn norm_estimate(&self) -> R {
        let last = *self.roots.last().expect("at least one root");
        self.extrapolated.max(last).min(R::one())
    }
}

fn rational_root<R: Real>(p: &BigRational, k: u32) -> R {
    // p^(1/2k) via logs; p spans hundreds of digits, so go through ln.
    let ln = ln_rational(p);
    R::from_f64_lossy((ln / (2.0 * k as f64)).exp())
}

/// Natural log of a positive rational, accurate to f64 precision.
pub fn ln_rational(p: &BigRational) -> f64 {
    let n = p.numer();
    let d = p.denom();
    let shift = n.bits() as i64 - d.bits() as i64;
    let scaled = if shift >= 0 {
        BigRational::new(n.clone(), d.clone() << shift as u64)
    } else {
        BigRational::new(n.clone() << (-shift) as u64, d.clone())
    };
    scaled.to_f64().map_or(f64::NEG_INFINITY, f64::ln) + shift as f64 * std::f64::consts::LN_2
}

/// Computes `r_1 <= ... <= r_K` for a symmetric measure.
///
/// Uniform full-sphere measures on free groups use the exact radial chain;
/// anything else goes through group-algebra convolution under `budget`.
/// On budget exhaustion the sequence is truncated and flagged.  The budget
/// must at least admit the first convolution pair (`supp mu^{*2}` atoms).
pub fn return_prob_norm_estimate<R: Real>(
    mu: &ShellMeasure,
    k_max: usize,
    budget: usize,
) -> ReturnProbEstimate<R> {
    assert!(k_max >= 1);
    let mut probabilities = Vec::with_capacity(k_max);
    let mut truncated = false;
    if let Some((rank, n)) = mu.word_sphere() {
        let mut chain = RadialChain::new(rank, n);
        for _ in 0..k_max {
            chain.step();
            chain.step();
            probabilities.push(chain.return_probability());
        }
    } else {
        let dim = mu.atoms()[0].dim();
        let mut v = GroupAlgebraVector::delta_identity(dim);
        for k in 0..k_max {
            let stepped = v
                .convolve(mu, budget, 2 * k + 1)
                .and_then(|u| u.convolve(mu, budget, 2 * k + 2));
            match stepped {
                Ok(u) => {
                    probabilities.push(u.mass_at_identity());
                    v = u;
                }
                Err(_) => {
                    truncated = true;
                    break;
                }
            }
        }
    }
    assert!(!probabilities.is_empty(), "budget must allow at least one step");
    assert_power_mean_monotone(&probabilities);
    let roots: Vec<R> = probabilities
        .iter()
        .enumerate()
        .map(|(i, p)| rational_root(p, i as u32 + 1))
        .collect();
    let extrapolated = richardson_ratio(&probabilities);
    ReturnProbEstimate { roots, probabilities, extrapolated, truncated }
}

/// Exact power-mean monotonicity: `p_{2k}^(k+1) <= p_{2k+2}^k`.
///
/// This is the spectral-measure Lyapunov inequality for self-adjoint Markov
/// operators, asserted on the exact rationals.
fn assert_power_mean_monotone(p: &[BigRational]) {
    for k in 1..p.len() {
        let lhs = rational_pow(&p[k - 1], k as u32 + 1);
        let rhs = rational_pow(&p[k], k as u32);
        assert!(lhs <= rhs, "power-mean monotonicity violated at k = {k}");
    }
}

fn rational_pow(q: &BigRational, e: u32) -> BigRational {
    BigRational::new(q.numer().pow(e), q.denom().pow(e))
}

/// `t_K = K s_K - (K-1) s_{K-1}` on the ratio sequence
/// `s_k = sqrt(p_{2k} / p_{2k-2})`, clamped to `(0, 1]`.
fn richardson_ratio<R: Real>(p: &[BigRational]) -> R {
    let s = |k: usize| -> f64 {
        let ratio = if k == 1 {
            p[0].clone()
        } else {
            &p[k - 1] / &p[k - 2]
        };
        (ln_rational(&ratio) / 2.0).exp()
    };
    let k = p.len();
    let t = if k == 1 {
        s(1)
    } else {
        k as f64 * s(k) - (k as f64 - 1.0) * s(k - 1)
    };
    R::from_f64_lossy(t.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Monte Carlo drift/entropy estimates at a fixed horizon.
#[derive(Debug, Clone)]
pub struct DriftEntropyEstimate<R: Real> {
    /// Mean displacement at the horizon divided by the horizon.
    pub drift: R,
    pub drift_stderr: R,
    /// Plug-in entropy of the empirical endpoint distribution per step.
    pub entropy: R,
    pub entropy_stderr: R,
    /// Miller–Madow bias correction already divided by the horizon; add to
    /// `entropy` for the corrected estimate.
    pub entropy_bias_correction: R,
    pub steps: usize,
    pub samples: usize,
}

/// Samples `samples` walk paths of length `steps` and reports drift and
/// entropy per step, with bootstrap standard errors.  Deterministic for a
/// fixed seed.
pub fn drift_entropy_estimate<R: Real>(
    mu: &ShellMeasure,
    steps: usize,
    samples: usize,
    seed: u64,
) -> DriftEntropyEstimate<R> {
    assert!(steps >= 2, "need at least two steps");
    assert!(samples >= 100, "need at least 100 samples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = mu.atoms();
    // BTreeMap keeps the count vector in a fixed order so the bootstrap
    // draws identical resamples for identical seeds.
    let mut endpoints: BTreeMap<GroupElement, u64> = BTreeMap::new();
    let mut displacements: Vec<f64> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut g = GroupElement::identity(atoms[0].dim());
        for _ in 0..steps {
            g = g.compose(&atoms[rng.gen_range(0..atoms.len())]).expect("uniform dimension");
        }
        displacements.push(walk_displacement(mu, &g));
        *endpoints.entry(g).or_insert(0) += 1;
    }

    let n = samples as f64;
    let mean = displacements.iter().sum::<f64>() / n;
    let var = displacements.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let drift = mean / steps as f64;
    let drift_stderr = (var / n).sqrt() / steps as f64;

    // Plug-in entropy of the empirical distribution, with bootstrap error
    // over resampled count vectors.
    let counts: Vec<u64> = endpoints.values().copied().collect();
    let entropy = plug_in_entropy(&counts, n) / steps as f64;
    let support = counts.len() as f64;
    let bias = (support - 1.0) / (2.0 * n) / steps as f64;
    let boots = 200;
    let mut boot_vals = Vec::with_capacity(boots);
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    for _ in 0..boots {
        let mut resampled = vec![0u64; counts.len()];
        for _ in 0..samples {
            // Inverse-CDF sampling over the empirical distribution.
            let mut u: f64 = rng.gen();
            let mut idx = 0;
            for (i, &p) in probs.iter().enumerate() {
                if u < p {
                    idx = i;
                    break;
                }
                u -= p;
                idx = i;
            }
            resampled[idx] += 1;
        }
        boot_vals.push(plug_in_entropy(&resampled, n) / steps as f64);
    }
    let bmean = boot_vals.iter().sum::<f64>() / boots as f64;
    let bvar =
        boot_vals.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (boots as f64 - 1.0);

    DriftEntropyEstimate {
        drift: R::from_f64_lossy(drift),
        drift_stderr: R::from_f64_lossy(drift_stderr),
        entropy: R::from_f64_lossy(entropy),
        entropy_stderr: R::from_f64_lossy(bvar.sqrt()),
        entropy_bias_correction: R::from_f64_lossy(bias),
        steps,
        samples,
    }
}

fn plug_in_entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Distance functional matching the measure's native metric: word length for
/// sphere measures, hyperbolic displacement otherwise.
fn walk_displacement(mu: &ShellMeasure, g: &GroupElement) -> f64 {
    if mu.word_sphere().is_some() {
        g.word().map_or(0.0, |w| w.len() as f64)
    } else {
        if g.is_identity() {
            return 0.0;
        }
        g.displacement_with_tol(1e-9).value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{enumerate_ball, srw_measure, EnumerationConfig};
    use crate::matrix::{sanov_presentation, sanov_word_presentation, GroupElement};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn radial_chain_srw_returns() {
        // SRW on F2: p_2 = 4/16 and p_4 = (16 + 12)/256 by path counting.
        let mut chain = RadialChain::new(2, 1);
        chain.step();
        chain.step();
        assert_eq!(chain.return_probability(), rat(1, 4));
        chain.step();
        chain.step();
        assert_eq!(chain.return_probability(), rat(7, 64));
        let total: BigRational = chain.mass.iter().sum();
        assert_eq!(total, BigRational::one());
    }

    #[test]
    fn radial_chain_matches_convolution() {
        // The radial shortcut and the full group-algebra convolution must
        // produce identical rationals.
        let p = sanov_word_presentation();
        let mu = srw_measure(&p);
        let exact: ReturnProbEstimate<f64> = return_prob_norm_estimate(&mu, 3, 1 << 20);
        let blind = mu.clone().without_word_sphere();
        let conv: ReturnProbEstimate<f64> = return_prob_norm_estimate(&blind, 3, 1 << 20);
        assert_eq!(exact.probabilities, conv.probabilities);

        // Also for a length-2 sphere step distribution.
        let ball = enumerate_ball(&p, 2, &EnumerationConfig::default()).unwrap();
        let shells = ball.shells(1);
        let s2 = shells.shells.iter().find(|s| s.n == 2).unwrap();
        assert_eq!(s2.word_sphere(), Some((2, 2)));
        let exact2: ReturnProbEstimate<f64> = return_prob_norm_estimate(s2, 2, 1 << 22);
        let blind2 = s2.clone().without_word_sphere();
        let conv2: ReturnProbEstimate<f64> = return_prob_norm_estimate(&blind2, 2, 1 << 22);
        assert_eq!(exact2.probabilities, conv2.probabilities);
    }

    #[test]
    fn roots_are_monotone_and_bounded() {
        let p = sanov_word_presentation();
        let mu = srw_measure(&p);
        let est: ReturnProbEstimate<f64> = return_prob_norm_estimate(&mu, 8, 1 << 20);
        for w in est.roots.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
        assert!(*est.roots.last().unwrap() <= 1.0);
        // r_1 = sqrt(1/(2m)) >= sqrt(1/4) for the diagonal contribution.
        assert!(est.roots[0] >= 0.5 - 1e-15);
        // Kesten limit sqrt(3)/2: the raw roots approach from below, slowly;
        // the ratio extrapolation lands close.
        let kesten = 3f64.sqrt() / 2.0;
        assert!(est.roots[7] < kesten);
        assert!((est.extrapolated - kesten).abs() < 0.011, "{}", est.extrapolated);
        assert!(est.norm_estimate() <= 1.0);
    }

    #[test]
    fn parabolic_pair_tends_to_one() {
        // <g> = Z is amenable: r_k -> 1 like the lazy-walk binomials.
        let a = GroupElement::from_rows_2([[1, 2], [0, 1]]).unwrap();
        let mu = ShellMeasure::symmetric_pair(&a).unwrap();
        let est: ReturnProbEstimate<f64> = return_prob_norm_estimate(&mu, 12, 1 << 16);
        // p_{2k} = C(2k, k) / 4^k exactly (simple walk on Z).
        for (i, p) in est.probabilities.iter().enumerate() {
            let k = (i + 1) as u64;
            let binom: BigInt = binomial(2 * k, k);
            assert_eq!(p, &BigRational::new(binom, BigInt::from(4u64).pow(k as u32)));
        }
        assert!(est.roots[11] > 0.8);
        assert!(est.extrapolated > 0.97);
    }

    fn binomial(n: u64, k: u64) -> BigInt {
        let mut out = BigInt::one();
        for i in 0..k {
            out = out * BigInt::from(n - i) / BigInt::from(i + 1);
        }
        out
    }

    #[test]
    fn convolution_budget_truncates() {
        let p = sanov_presentation();
        let ball = enumerate_ball(&p, 4, &EnumerationConfig::default()).unwrap();
        let shells = ball.shells(2);
        let mu = shells.shells.last().unwrap();
        let est: ReturnProbEstimate<f64> = return_prob_norm_estimate(mu, 6, 1000);
        assert!(est.truncated);
        assert!(!est.probabilities.is_empty());
    }

    #[test]
    fn drift_entropy_srw_bounds() {
        let p = sanov_word_presentation();
        let mu = srw_measure(&p);
        let est: DriftEntropyEstimate<f64> = drift_entropy_estimate(&mu, 12, 400, 42);
        // Support bounds: drift in [1/2, 1], entropy at most log 4 per step.
        assert!(est.drift >= 0.5 - 3.0 * est.drift_stderr);
        assert!(est.drift <= 1.0);
        assert!(est.entropy <= 4f64.ln() + 1e-12);
        assert!(est.entropy > 0.0);
    }

    #[test]
    fn drift_matches_radial_chain_expectation() {
        let p = sanov_word_presentation();
        let ball = enumerate_ball(&p, 4, &EnumerationConfig::default()).unwrap();
        let shells = ball.shells(1);
        let s4 = shells.shells.iter().find(|s| s.n == 4).unwrap().clone();
        let steps = 20;
        let est: DriftEntropyEstimate<f64> = drift_entropy_estimate(&s4, steps, 10_000, 7);
        let mut chain = RadialChain::new(2, 4);
        for _ in 0..steps {
            chain.step();
        }
        let exact = chain.expected_radius().to_f64().unwrap() / steps as f64;
        let diff = (est.drift - exact).abs();
        assert!(
            diff <= 3.0 * est.drift_stderr + 1e-9,
            "drift {} vs exact {exact} (3 sigma = {})",
            est.drift,
            3.0 * est.drift_stderr
        );
    }

    #[test]
    fn determinism_under_fixed_seed() {
        let p = sanov_word_presentation();
        let mu = srw_measure(&p);
        let a: DriftEntropyEstimate<f64> = drift_entropy_estimate(&mu, 6, 200, 9);
        let b: DriftEntropyEstimate<f64> = drift_entropy_estimate(&mu, 6, 200, 9);
        assert_eq!(a.drift, b.drift);
        assert_eq!(a.entropy, b.entropy);
        assert_eq!(a.entropy_stderr, b.entropy_stderr);
    }
}
