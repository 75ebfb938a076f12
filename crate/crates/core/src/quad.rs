//! Exact arithmetic in the real quadratic extension `Q[sqrt(D)]`.
//!
//! Values are pairs `a + b sqrt(D)` with rational `a, b` and a square-free
//! `D > 1` carried at runtime; mixing distinct `D` panics.  Comparisons are
//! exact sign decisions, so maxima of extension-valued sums are reproducible.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadExt {
    pub a: BigRational,
    pub b: BigRational,
    d: u64,
}

impl QuadExt {
    pub fn new(a: BigRational, b: BigRational, d: u64) -> Self {
        assert!(d > 1, "radicand must exceed 1");
        QuadExt { a, b, d }
    }

    pub fn zero(d: u64) -> Self {
        Self::new(BigRational::zero(), BigRational::zero(), d)
    }

    pub fn one(d: u64) -> Self {
        Self::new(BigRational::one(), BigRational::zero(), d)
    }

    pub fn from_rational(a: BigRational, d: u64) -> Self {
        Self::new(a, BigRational::zero(), d)
    }

    pub fn sqrt_d(d: u64) -> Self {
        Self::new(BigRational::zero(), BigRational::one(), d)
    }

    pub fn radicand(&self) -> u64 {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    fn check(&self, other: &Self) {
        assert_eq!(self.d, other.d, "mixed radicands {} and {}", self.d, other.d);
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check(other);
        Self::new(&self.a + &other.a, &self.b + &other.b, self.d)
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.check(other);
        self.a += &other.a;
        self.b += &other.b;
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check(other);
        Self::new(&self.a - &other.a, &self.b - &other.b, self.d)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check(other);
        let d = BigRational::from_integer(BigInt::from(self.d));
        Self::new(
            &self.a * &other.a + (&self.b * &other.b) * &d,
            &self.a * &other.b + &self.b * &other.a,
            self.d,
        )
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        Self::new(&self.a * q, &self.b * q, self.d)
    }

    /// Multiplies by `D^(t/2)` for a possibly odd, possibly negative `t`.
    pub fn mul_sqrt_pow(&self, t: i64) -> Self {
        let d_int = BigInt::from(self.d);
        let whole = t.div_euclid(2);
        let frac = t.rem_euclid(2);
        let rat_pow = if whole >= 0 {
            BigRational::from_integer(d_int.pow(whole as u32))
        } else {
            BigRational::new(BigInt::one(), d_int.pow((-whole) as u32))
        };
        let scaled = self.scale(&rat_pow);
        if frac == 0 {
            scaled
        } else {
            scaled.mul(&Self::sqrt_d(self.d))
        }
    }

    /// Exact sign of `a + b sqrt(D)`.
    pub fn sign(&self) -> Ordering {
        let sa = rational_sign(&self.a);
        let sb = rational_sign(&self.b);
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            _ => {
                // Signs differ: compare a^2 with b^2 D; the larger term wins.
                let a2 = &self.a * &self.a;
                let b2d = &self.b * &self.b * BigRational::from_integer(BigInt::from(self.d));
                match a2.cmp(&b2d) {
                    Ordering::Greater => sa,
                    Ordering::Less => sb,
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    pub fn to_f64(&self) -> f64 {
        crate::interval::rational_to_f64(&self.a)
            + crate::interval::rational_to_f64(&self.b) * (self.d as f64).sqrt()
    }
}

fn rational_sign(q: &BigRational) -> Ordering {
    if q.is_positive() {
        Ordering::Greater
    } else if q.is_negative() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

impl PartialOrd for QuadExt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuadExt {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sub(other).sign()
    }
}

impl std::fmt::Display for QuadExt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} + {}*sqrt({})", self.a, self.b, self.d)
    }
}
