//! Reduced words over a free alphabet.
//!
//! Letters are nonzero `i32` values: `+k` is the k-th generator, `-k` its
//! inverse, with `1 <= k <= rank`.  All public constructors reduce their
//! input, so a `Word` value is always freely reduced.

use serde::{Deserialize, Serialize};

/// A freely reduced word; the empty word is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<i32>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letter(l: i32) -> Self {
        assert!(l != 0, "letter must be nonzero");
        Word(vec![l])
    }

    /// Reduces an arbitrary letter sequence by cancelling adjacent inverses.
    pub fn from_letters(letters: &[i32]) -> Self {
        let mut out: Vec<i32> = Vec::with_capacity(letters.len());
        for &l in letters {
            assert!(l != 0, "letter must be nonzero");
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn letters(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Word(self.0.iter().rev().map(|&l| -l).collect())
    }

    /// Concatenation followed by free reduction at the seam.
    pub fn concat(&self, other: &Self) -> Self {
        let mut left = self.0.clone();
        let mut start = 0usize;
        while start < other.0.len() {
            match left.last() {
                Some(&l) if l == -other.0[start] => {
                    left.pop();
                    start += 1;
                }
                _ => break,
            }
        }
        left.extend_from_slice(&other.0[start..]);
        Word(left)
    }

    pub fn push(&self, l: i32) -> Self {
        assert!(l != 0, "letter must be nonzero");
        let mut v = self.0.clone();
        if v.last() == Some(&-l) {
            v.pop();
        } else {
            v.push(l);
        }
        Word(v)
    }

    /// Number of letters cancelled when forming `self * other`.
    pub fn cancellation(&self, other: &Self) -> usize {
        let n = self.0.len().min(other.0.len());
        let mut c = 0usize;
        while c < n && self.0[self.0.len() - 1 - c] == -other.0[c] {
            c += 1;
        }
        c
    }

    /// Length of the longest common prefix with `other`.
    pub fn common_prefix_len(&self, other: &Self) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    pub fn prefix(&self, n: usize) -> Self {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn starts_with(&self, prefix: &Self) -> bool {
        self.0.len() >= prefix.0.len() && self.0[..prefix.0.len()] == prefix.0[..]
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, &l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            let name = (b'a' + (l.unsigned_abs() as u8 - 1)) as char;
            if l > 0 {
                write!(f, "{name}")?;
            } else {
                write!(f, "{name}'")?;
            }
        }
        Ok(())
    }
}

/// Iterates all reduced words of exactly length `n` over `rank` generators,
/// in lexicographic order of their letter sequences by generator index
/// `1, -1, 2, -2, ...`.
pub fn sphere_words(rank: usize, n: usize) -> impl Iterator<Item = Word> {
    SphereIter::new(rank, n)
}

/// `|S_n|` for the free group of the given rank: `2m (2m-1)^(n-1)`.
pub fn sphere_size(rank: usize, n: usize) -> u64 {
    if n == 0 {
        return 1;
    }
    let m = rank as u64;
    2 * m * (2 * m - 1).pow((n - 1) as u32)
}

struct SphereIter {
    rank: usize,
    n: usize,
    stack: Vec<i32>,
    started: bool,
    done: bool,
}

impl SphereIter {
    fn new(rank: usize, n: usize) -> Self {
        assert!(rank >= 1);
        SphereIter { rank, n, stack: Vec::with_capacity(n), started: false, done: false }
    }

    fn alphabet(&self) -> impl Iterator<Item = i32> {
        let r = self.rank as i32;
        (1..=r).flat_map(|k| [k, -k])
    }

    fn order_index(&self, l: i32) -> usize {
        let k = (l.unsigned_abs() as usize - 1) * 2;
        if l > 0 {
            k
        } else {
            k + 1
        }
    }

    fn first_allowed(&self, prev: Option<i32>, from_index: usize) -> Option<i32> {
        self.alphabet()
            .skip(from_index)
            .find(|&l| prev != Some(-l))
    }

    fn descend(&mut self) -> bool {
        while self.stack.len() < self.n {
            let prev = self.stack.last().copied();
            match self.first_allowed(prev, 0) {
                Some(l) => self.stack.push(l),
                None => return false,
            }
        }
        true
    }

    fn advance(&mut self) -> bool {
        loop {
            let Some(last) = self.stack.pop() else {
                return false;
            };
            let prev = self.stack.last().copied();
            let next_idx = self.order_index(last) + 1;
            if let Some(l) = self.first_allowed(prev, next_idx) {
                self.stack.push(l);
                return self.descend();
            }
        }
    }
}

impl Iterator for SphereIter {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        let have = if !self.started {
            self.started = true;
            self.descend()
        } else {
            self.advance()
        };
        if have {
            Some(Word(self.stack.clone()))
        } else {
            self.done = true;
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn reduction_cancels() {
        let w = Word::from_letters(&[1, 2, -2, -1, 1]);
        assert_eq!(w.letters(), &[1]);
        assert!(Word::from_letters(&[1, -1]).is_empty());
    }

    #[test]
    fn concat_inverse_is_identity() {
        let w = Word::from_letters(&[1, 2, -1, 2, 2]);
        assert!(w.concat(&w.inverse()).is_empty());
        assert!(w.inverse().concat(&w).is_empty());
    }

    #[test]
    fn sphere_sizes_rank_two() {
        assert_eq!(sphere_words(2, 0).count(), 1);
        assert_eq!(sphere_words(2, 1).count(), 4);
        assert_eq!(sphere_words(2, 2).count(), 12);
        assert_eq!(sphere_words(2, 3).count(), 36);
        assert_eq!(sphere_size(2, 3), 36);
        assert_eq!(sphere_size(3, 2), 30);
        assert_eq!(sphere_words(3, 2).count(), 30);
    }

    #[test]
    fn sphere_words_are_reduced_and_distinct() {
        let words: Vec<Word> = sphere_words(2, 5).collect();
        let set: HashSet<&Word> = words.iter().collect();
        assert_eq!(set.len(), words.len());
        for w in &words {
            assert_eq!(w.len(), 5);
            assert_eq!(Word::from_letters(w.letters()), *w);
        }
    }

    #[test]
    fn cancellation_counts() {
        let g = Word::from_letters(&[1, 2]);
        let h = Word::from_letters(&[-2, -1, 2]);
        // Seam cancels 2,-2 then 1,-1, leaving [2].
        assert_eq!(g.cancellation(&h), 2);
        assert_eq!(g.concat(&h).letters(), &[2]);
        assert_eq!(h.cancellation(&g), 0);
    }

    #[test]
    fn display_names() {
        let w = Word::from_letters(&[1, -2]);
        assert_eq!(format!("{w}"), "a.b'");
        assert_eq!(format!("{}", Word::identity()), "e");
    }

    proptest! {
        #[test]
        fn prop_concat_associative(a in prop::collection::vec(-2i32..=2, 0..12),
                                   b in prop::collection::vec(-2i32..=2, 0..12),
                                   c in prop::collection::vec(-2i32..=2, 0..12)) {
            let clean = |v: &[i32]| -> Vec<i32> { v.iter().copied().filter(|&x| x != 0).collect() };
            let (a, b, c) = (Word::from_letters(&clean(&a)),
                             Word::from_letters(&clean(&b)),
                             Word::from_letters(&clean(&c)));
            prop_assert_eq!(a.concat(&b).concat(&c), a.concat(&b.concat(&c)));
        }

        #[test]
        fn prop_cancellation_matches_lengths(a in prop::collection::vec(-2i32..=2, 0..12),
                                             b in prop::collection::vec(-2i32..=2, 0..12)) {
            let clean = |v: &[i32]| -> Vec<i32> { v.iter().copied().filter(|&x| x != 0).collect() };
            let (a, b) = (Word::from_letters(&clean(&a)), Word::from_letters(&clean(&b)));
            let c = a.cancellation(&b);
            let prod = a.concat(&b);
            // Reduced inputs cancel only at the seam: lengths drop by exactly 2c.
            prop_assert_eq!(prod.len() + 2 * c, a.len() + b.len());
        }
    }
}
