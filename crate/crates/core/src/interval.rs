//! Directed-rounding interval arithmetic over exact rationals.
//!
//! Transcendental thresholds (`e^n + e^-n`, `log`, powers of matrix norms)
//! are enclosed in rational intervals whose width shrinks as the working
//! precision grows.  Comparisons against exact rationals either decide or
//! report an overlap, in which case callers escalate precision and retry.
//! Since the compared thresholds are irrational at the arguments we use,
//! escalation always terminates.
//!
//! Series are summed exactly in rationals with explicit tail bounds; results
//! are rounded outward onto a dyadic grid to keep denominators bounded.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;

/// Closed rational interval `[lo, hi]` enclosing an exact real value.
#[derive(Debug, Clone, PartialEq)]
pub struct RatInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl RatInterval {
    pub fn point(q: BigRational) -> Self {
        Self { lo: q.clone(), hi: q }
    }

    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn midpoint_f64(&self) -> f64 {
        let mid = (&self.lo + &self.hi) / BigRational::from_integer(2.into());
        rational_to_f64(&mid)
    }

    /// Compares the enclosed value with `q`; `None` when `q` lies inside.
    pub fn cmp_rational(&self, q: &BigRational) -> Option<Ordering> {
        if &self.hi < q {
            Some(Ordering::Less)
        } else if &self.lo > q {
            Some(Ordering::Greater)
        } else if self.lo == self.hi && &self.lo == q {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.lo + &other.lo, &self.hi + &other.hi)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.lo - &other.hi, &self.hi - &other.lo)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.hi.clone(), -self.lo.clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let cands = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = cands.iter().min().unwrap().clone();
        let hi = cands.iter().max().unwrap().clone();
        Self::new(lo, hi)
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        if q.is_negative() {
            Self::new(&self.hi * q, &self.lo * q)
        } else {
            Self::new(&self.lo * q, &self.hi * q)
        }
    }

    /// Reciprocal; requires the interval to exclude zero.
    pub fn recip(&self) -> Self {
        assert!(
            self.lo.is_positive() || self.hi.is_negative(),
            "reciprocal of interval containing zero"
        );
        Self::new(self.hi.recip(), self.lo.recip())
    }

    /// Rounds both endpoints outward onto the dyadic grid `2^-bits`.
    pub fn round_out(&self, bits: u32) -> Self {
        Self::new(round_down(&self.lo, bits), round_up(&self.hi, bits))
    }
}

fn pow2(bits: u32) -> BigInt {
    BigInt::one() << bits
}

// ---- dyadic fixed-point kernel -------------------------------------------
//
// Series are evaluated on integer mantissas at scale 2^-w with directed
// rounding, which keeps every intermediate at O(w) bits.  Exact rational
// accumulation would square denominators at each term.

fn to_fixed_floor(q: &BigRational, w: u32) -> BigInt {
    (q * BigRational::from_integer(pow2(w))).floor().to_integer()
}

fn to_fixed_ceil(q: &BigRational, w: u32) -> BigInt {
    (q * BigRational::from_integer(pow2(w))).ceil().to_integer()
}

/// `ceil(x / 2^w)`; the `>>` operator on `BigInt` floors.
fn ceil_shr(x: BigInt, w: u32) -> BigInt {
    -((-x) >> w)
}

fn ceil_div(x: BigInt, n: u64) -> BigInt {
    -(-x).div_floor(&BigInt::from(n))
}

fn round_down(q: &BigRational, bits: u32) -> BigRational {
    let scaled = q * BigRational::from_integer(pow2(bits));
    BigRational::new(scaled.floor().to_integer(), pow2(bits))
}

fn round_up(q: &BigRational, bits: u32) -> BigRational {
    let scaled = q * BigRational::from_integer(pow2(bits));
    BigRational::new(scaled.ceil().to_integer(), pow2(bits))
}

/// Lossy conversion used only at reporting boundaries.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    num_traits::ToPrimitive::to_f64(q).unwrap_or_else(|| {
        // Fall back to mantissa/exponent splitting for extreme magnitudes.
        let (n, d) = (q.numer(), q.denom());
        let shift = n.bits() as i64 - d.bits() as i64;
        let half = BigRational::new(n.clone(), d.clone())
            / BigRational::from_integer(BigInt::one() << shift.unsigned_abs() as u32);
        num_traits::ToPrimitive::to_f64(&half).map_or(f64::INFINITY, |v| {
            v * 2f64.powi(shift as i32)
        })
    })
}

/// Encloses `exp(x)` with endpoints on the `2^-(bits)` grid (relative scale).
pub fn exp(x: &BigRational, bits: u32) -> RatInterval {
    if x.is_negative() {
        return exp(&-x.clone(), bits + 4).recip().round_out(bits);
    }
    let k = x.floor().to_integer();
    let k_u: u32 = num_traits::ToPrimitive::to_u32(&k).expect("exp argument out of range");
    let f = x - BigRational::from_integer(k);
    // Guard bits cover the k multiplications by e and the final product.
    let work = bits + 8 + 2 * (33 - (k_u + 1).leading_zeros());
    let ef = exp_series_unit(&f, work);
    let mut acc = ef;
    if k_u > 0 {
        let e1 = exp_series_unit(&BigRational::one(), work + k_u.ilog2() + 2);
        let mut base = e1;
        let mut exp_left = k_u;
        loop {
            if exp_left & 1 == 1 {
                acc = acc.mul(&base).round_out(work);
            }
            exp_left >>= 1;
            if exp_left == 0 {
                break;
            }
            base = base.mul(&base).round_out(work);
        }
    }
    acc.round_out(bits)
}

/// Series enclosure of `exp(f)` for `0 <= f <= 1`.
fn exp_series_unit(f: &BigRational, bits: u32) -> RatInterval {
    debug_assert!(!f.is_negative() && *f <= BigRational::one());
    let w = bits + 16;
    let f_lo = to_fixed_floor(f, w);
    let f_hi = to_fixed_ceil(f, w);
    let mut term_lo = pow2(w);
    let mut term_hi = pow2(w);
    let mut sum_lo = term_lo.clone();
    let mut sum_hi = term_hi.clone();
    // Stop once the tail (below one current term for j >= 1) fits in the
    // guard margin.
    let stop = pow2(8);
    let mut j = 1u64;
    loop {
        term_lo = ((&term_lo * &f_lo) >> w).div_floor(&BigInt::from(j));
        term_hi = ceil_div(ceil_shr(&term_hi * &f_hi, w), j);
        if term_hi.is_zero() {
            break;
        }
        sum_lo += &term_lo;
        sum_hi += &term_hi;
        if term_hi <= stop {
            // Remaining tail <= term_j * sum_{i>=1} (f/(j+1))^i <= term_j.
            sum_hi += &term_hi;
            sum_hi += BigInt::one();
            break;
        }
        j += 1;
    }
    RatInterval::new(BigRational::new(sum_lo, pow2(w)), BigRational::new(sum_hi, pow2(w)))
}

/// Encloses `ln(x)` for `x > 0` with endpoints on the `2^-bits` grid.
pub fn ln(x: &BigRational, bits: u32) -> RatInterval {
    assert!(x.is_positive(), "ln of non-positive rational");
    let work = bits + 8;
    // Normalize x = y * 2^s with y in [3/4, 3/2).
    let mut s: i64 = x.numer().bits() as i64 - x.denom().bits() as i64;
    let three_half = BigRational::new(3.into(), 2.into());
    let three_quarter = BigRational::new(3.into(), 4.into());
    let two = BigRational::from_integer(2.into());
    let mut y = if s >= 0 {
        x / BigRational::from_integer(pow2(s as u32))
    } else {
        x * BigRational::from_integer(pow2((-s) as u32))
    };
    while y >= three_half {
        y /= &two;
        s += 1;
    }
    while y < three_quarter {
        y *= &two;
        s -= 1;
    }
    let one = BigRational::one();
    let ln_y = if y >= one {
        atanh_twice(&y, work)
    } else {
        atanh_twice(&y.recip(), work).neg()
    };
    if s == 0 {
        return ln_y.round_out(bits);
    }
    let ln2 = atanh_twice(&two, work + 4);
    let result = ln_y.add(&ln2.scale(&BigRational::from_integer(s.into())));
    result.round_out(bits)
}

/// Enclosure of `ln(y) = 2 atanh((y-1)/(y+1))` via the odd series;
/// requires `y >= 1` with `((y-1)/(y+1))^2 <= 1/2`.
fn atanh_twice(y: &BigRational, bits: u32) -> RatInterval {
    let one = BigRational::one();
    debug_assert!(*y >= one);
    if y == &one {
        return RatInterval::point(BigRational::zero());
    }
    let z = (y - &one) / (y + &one);
    let w = bits + 16;
    let z_lo = to_fixed_floor(&z, w);
    let z_hi = to_fixed_ceil(&z, w);
    let z2_lo = (&z_lo * &z_lo) >> w;
    let z2_hi = ceil_shr(&z_hi * &z_hi, w);
    debug_assert!(z2_hi <= pow2(w - 1));
    let mut pow_lo = z_lo.clone();
    let mut pow_hi = z_hi.clone();
    let mut sum_lo = z_lo;
    let mut sum_hi = z_hi;
    let stop = pow2(8);
    let mut j = 3u64;
    loop {
        pow_lo = (&pow_lo * &z2_lo) >> w;
        pow_hi = ceil_shr(&pow_hi * &z2_hi, w);
        let term_lo = pow_lo.div_floor(&BigInt::from(j));
        let term_hi = ceil_div(pow_hi.clone(), j);
        sum_lo += &term_lo;
        sum_hi += &term_hi;
        if term_hi <= stop {
            // Tail <= term_j * z^2 / (1 - z^2) <= term_j for z^2 <= 1/2.
            sum_hi += &term_hi;
            sum_hi += BigInt::one();
            break;
        }
        j += 2;
    }
    let denom = pow2(w - 1); // carries the factor of 2
    RatInterval::new(BigRational::new(sum_lo, denom.clone()), BigRational::new(sum_hi, denom))
}

/// Enclosure of `pi` via Machin's formula `16 atan(1/5) - 4 atan(1/239)`.
pub fn pi(bits: u32) -> RatInterval {
    let work = bits + 8;
    let a5 = atan_small(&BigRational::new(1.into(), 5.into()), work);
    let a239 = atan_small(&BigRational::new(1.into(), 239.into()), work);
    a5.scale(&BigRational::from_integer(16.into()))
        .sub(&a239.scale(&BigRational::from_integer(4.into())))
        .round_out(bits)
}

/// Alternating arctangent series for `0 < z <= 1/4`; the tail after any
/// partial sum is bounded by the next term.
fn atan_small(z: &BigRational, bits: u32) -> RatInterval {
    debug_assert!(z.is_positive() && *z <= BigRational::new(1.into(), 4.into()));
    let w = bits + 16;
    let z_lo = to_fixed_floor(z, w);
    let z_hi = to_fixed_ceil(z, w);
    let z2_lo = (&z_lo * &z_lo) >> w;
    let z2_hi = ceil_shr(&z_hi * &z_hi, w);
    let mut pow_lo = z_lo.clone();
    let mut pow_hi = z_hi.clone();
    let mut sum_lo = z_lo;
    let mut sum_hi = z_hi;
    let stop = pow2(8);
    let mut j = 3u64;
    let mut negative = true;
    loop {
        pow_lo = (&pow_lo * &z2_lo) >> w;
        pow_hi = ceil_shr(&pow_hi * &z2_hi, w);
        let term_lo = pow_lo.div_floor(&BigInt::from(j));
        let term_hi = ceil_div(pow_hi.clone(), j);
        if negative {
            sum_lo -= &term_hi;
            sum_hi -= &term_lo;
        } else {
            sum_lo += &term_lo;
            sum_hi += &term_hi;
        }
        if term_hi <= stop {
            // Alternating tail is no larger than the next term <= term_j.
            sum_lo -= &term_hi;
            sum_lo -= BigInt::one();
            sum_hi += &term_hi;
            sum_hi += BigInt::one();
            break;
        }
        j += 2;
        negative = !negative;
    }
    let denom = pow2(w);
    RatInterval::new(BigRational::new(sum_lo, denom.clone()), BigRational::new(sum_hi, denom))
}

/// Encloses `sqrt(x)` for `x >= 0` with relative gap below `2^-bits`.
pub fn sqrt(x: &BigRational, bits: u32) -> RatInterval {
    assert!(!x.is_negative(), "sqrt of negative rational");
    if x.is_zero() {
        return RatInterval::point(BigRational::zero());
    }
    let p = x.numer();
    let q = x.denom();
    let n = p * q;
    let shifted: BigInt = &n << (2 * bits);
    let root = shifted.sqrt();
    let denom = q * pow2(bits);
    RatInterval::new(
        BigRational::new(root.clone(), denom.clone()),
        BigRational::new(root + BigInt::one(), denom),
    )
}

/// Encloses `e^n + e^-n` for an integer radius `n >= 0`.
pub fn cosh_threshold(n: u32, bits: u32) -> RatInterval {
    if n == 0 {
        return RatInterval::point(BigRational::from_integer(2.into()));
    }
    let arg = BigRational::from_integer(BigInt::from(n));
    let e_n = exp(&arg, bits + 4);
    e_n.add(&e_n.recip()).round_out(bits)
}

/// Enclosure of `exp` over an interval argument (monotone extension).
pub fn exp_interval(x: &RatInterval, bits: u32) -> RatInterval {
    RatInterval::new(exp(&x.lo, bits).lo, exp(&x.hi, bits).hi)
}

/// Enclosure of `ln` over a positive interval argument.
pub fn ln_interval(x: &RatInterval, bits: u32) -> RatInterval {
    RatInterval::new(ln(&x.lo, bits).lo, ln(&x.hi, bits).hi)
}

/// Enclosure of `sqrt` over a nonnegative interval argument.
pub fn sqrt_interval(x: &RatInterval, bits: u32) -> RatInterval {
    RatInterval::new(sqrt(&x.lo, bits).lo, sqrt(&x.hi, bits).hi)
}

/// Floor square root approximation of a nonnegative integer scaled by
/// `2^-bits`; used to seed high-precision quadratic-irrational coordinates.
pub fn sqrt_int_approx(n: u64, bits: u32) -> BigRational {
    let shifted: BigInt = BigInt::from(n) << (2 * bits);
    BigRational::new(shifted.sqrt(), pow2(bits))
}

/// Decides `value <=> q` by escalating precision; `eval` receives the bit
/// budget and must return a valid enclosure of the same underlying real.
pub fn decide_cmp<F>(q: &BigRational, mut eval: F) -> Ordering
where
    F: FnMut(u32) -> RatInterval,
{
    let mut bits = 96;
    loop {
        let enc = eval(bits);
        if let Some(ord) = enc.cmp_rational(q) {
            return ord;
        }
        assert!(
            bits < 65536,
            "comparison did not resolve at 65536 bits; value may equal threshold"
        );
        bits *= 2;
    }
}
