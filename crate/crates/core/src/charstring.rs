//! Characteristic strings: one bit per slot, `0` for an honest slot and `1`
//! for an adversarial one. Slot `i` is stored at index `i - 1`; the genesis
//! slot 0 only exists inside forks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// The generator behind every stochastic operation in the crate.
pub type SlotRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SlotRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharStringError {
    #[error("invalid character {found:?} at position {position}; expected '0' or '1'")]
    BadSymbol { position: usize, found: char },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("probability {p} at slot {slot} exceeds the martingale bound {bound}")]
    MartingaleViolation { slot: usize, p: f64, bound: f64 },
    #[error("{0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct CharString {
    bits: Vec<bool>,
}

impl CharString {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn ones(n: usize) -> Self {
        Self { bits: vec![true; n] }
    }

    /// The `n` low bits of `code`, most significant first.
    pub fn from_code(code: u64, n: usize) -> Self {
        Self {
            bits: (0..n).rev().map(|i| (code >> i) & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Bit of slot `slot` (1-based). Slot 0 is genesis and counts as honest.
    pub fn is_adversarial(&self, slot: usize) -> bool {
        slot >= 1 && self.bits[slot - 1]
    }

    pub fn is_honest(&self, slot: usize) -> bool {
        !self.is_adversarial(slot)
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn prefix(&self, len: usize) -> CharString {
        Self::new(self.bits[..len].to_vec())
    }

    pub fn suffix(&self, from: usize) -> CharString {
        Self::new(self.bits[from..].to_vec())
    }

    /// `(x, y)` with `|x| = at`.
    pub fn split_at(&self, at: usize) -> (CharString, CharString) {
        (self.prefix(at), self.suffix(at))
    }

    pub fn concat(&self, other: &CharString) -> CharString {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        Self::new(bits)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Adversarial slots in `1..=slot`.
    pub fn ones_through(&self, slot: usize) -> usize {
        self.bits[..slot.min(self.len())].iter().filter(|&&b| b).count()
    }

    /// Prefix counts of adversarial slots: entry `i` covers slots `1..=i`.
    pub fn ones_prefix_counts(&self) -> Vec<usize> {
        let mut counts = Vec::with_capacity(self.len() + 1);
        counts.push(0);
        let mut acc = 0;
        for &b in &self.bits {
            acc += usize::from(b);
            counts.push(acc);
        }
        counts
    }

    pub fn honest_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| !b)
            .map(|(i, _)| i + 1)
    }

    /// Text form with the trailing newline used for piping.
    pub fn to_line(&self) -> String {
        format!("{self}\n")
    }
}

impl fmt::Display for CharString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for CharString {
    type Err = CharStringError;

    /// Accepts `"0"`/`"1"` text; surrounding whitespace is ignored and
    /// `"ε"` or `"-"` denote the empty string.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "ε" || s == "-" {
            return Ok(Self::empty());
        }
        s.chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                found => Err(CharStringError::BadSymbol { position, found }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }
}

/// True iff every adversarial slot of `a` is adversarial in `b`.
pub fn leq(a: &CharString, b: &CharString) -> Result<bool, CharStringError> {
    if a.len() != b.len() {
        return Err(CharStringError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.bits.iter().zip(&b.bits).all(|(&x, &y)| !x || y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliParams {
    pub alpha: f64,
    pub n: usize,
}

impl BernoulliParams {
    pub fn new(alpha: f64, n: usize) -> Result<Self, CharStringError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CharStringError::BadParams(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self { alpha, n })
    }

    pub fn from_eps(eps: f64, n: usize) -> Result<Self, CharStringError> {
        Self::new((1.0 - eps) / 2.0, n)
    }

    pub fn eps(&self) -> f64 {
        1.0 - 2.0 * self.alpha
    }
}

// Both samplers compare one uniform draw per slot against the slot's
// probability, so equal probabilities give equal strings for equal seeds.
fn draw(rng: &mut SlotRng, p: f64) -> bool {
    rng.random::<f64>() < p
}

pub fn sample_bernoulli_with(params: BernoulliParams, rng: &mut SlotRng) -> CharString {
    CharString::new((0..params.n).map(|_| draw(rng, params.alpha)).collect())
}

pub fn sample_bernoulli(params: BernoulliParams, seed: u64) -> CharString {
    sample_bernoulli_with(params, &mut rng_from_seed(seed))
}

pub type ConditionalFn = dyn Fn(&CharString) -> f64 + Send + Sync;

/// A distribution on strings given by the probability of an adversarial
/// slot conditioned on the prefix.
#[derive(Clone)]
pub struct MartingaleSource {
    cond: Arc<ConditionalFn>,
    epsilon: f64,
}

impl MartingaleSource {
    pub fn new<F>(epsilon: f64, cond: F) -> Result<Self, CharStringError>
    where
        F: Fn(&CharString) -> f64 + Send + Sync + 'static,
    {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CharStringError::BadParams(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self {
            cond: Arc::new(cond),
            epsilon,
        })
    }

    pub fn constant(epsilon: f64, p: f64) -> Result<Self, CharStringError> {
        Self::new(epsilon, move |_| p)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn bound(&self) -> f64 {
        (1.0 - self.epsilon) / 2.0
    }

    pub fn probability(&self, prefix: &CharString) -> f64 {
        (self.cond)(prefix)
    }
}

impl fmt::Debug for MartingaleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MartingaleSource")
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

pub fn sample_martingale_with(
    source: &MartingaleSource,
    n: usize,
    rng: &mut SlotRng,
) -> Result<CharString, CharStringError> {
    let bound = source.bound();
    let mut w = CharString::empty();
    for slot in 1..=n {
        let p = source.probability(&w);
        if p > bound || p.is_nan() {
            return Err(CharStringError::MartingaleViolation { slot, p, bound });
        }
        w.push(draw(rng, p));
    }
    Ok(w)
}

pub fn sample_martingale(
    source: &MartingaleSource,
    n: usize,
    seed: u64,
) -> Result<CharString, CharStringError> {
    sample_martingale_with(source, n, &mut rng_from_seed(seed))
}

/// Seed for trial `index` of a run seeded with `seed` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(s: &str) -> CharString {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        assert_eq!(cs("010100110").to_string(), "010100110");
        assert_eq!(cs("").len(), 0);
        assert_eq!(cs("ε"), CharString::empty());
        assert_eq!(cs("0110\n").to_line(), "0110\n");
        assert!(matches!(
            "01x".parse::<CharString>(),
            Err(CharStringError::BadSymbol { position: 2, found: 'x' })
        ));
    }

    #[test]
    fn slot_indexing_is_one_based() {
        let w = cs("010");
        assert!(w.is_honest(0));
        assert!(w.is_honest(1));
        assert!(w.is_adversarial(2));
        assert_eq!(w.honest_slots().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(w.ones_prefix_counts(), vec![0, 0, 1, 1]);
        assert_eq!(CharString::from_code(0b011, 3), cs("011"));
    }

    #[test]
    fn leq_examples() {
        assert!(leq(&cs("010"), &cs("011")).unwrap());
        assert!(!leq(&cs("010"), &cs("001")).unwrap());
        assert!(leq(&cs(""), &cs("")).unwrap());
        assert!(matches!(
            leq(&cs("0"), &cs("01")),
            Err(CharStringError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bernoulli_extremes() {
        for seed in 0..5 {
            assert_eq!(sample_bernoulli(BernoulliParams::new(0.0, 5).unwrap(), seed), cs("00000"));
            assert_eq!(sample_bernoulli(BernoulliParams::new(1.0, 3).unwrap(), seed), cs("111"));
        }
    }

    #[test]
    fn bernoulli_frequency_concentrates() {
        let n = 100_000;
        let w = sample_bernoulli(BernoulliParams::new(0.3, n).unwrap(), 1);
        let freq = w.count_ones() as f64 / n as f64;
        assert!((freq - 0.3).abs() <= 3.0 * (0.3f64 * 0.7 / n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = BernoulliParams::new(0.4, 64).unwrap();
        assert_eq!(sample_bernoulli(p, 9), sample_bernoulli(p, 9));
        assert_ne!(sample_bernoulli(p, 9), sample_bernoulli(p, 10));
    }

    #[test]
    fn martingale_violation_is_reported() {
        let src = MartingaleSource::constant(0.4, 0.31).unwrap();
        assert!(matches!(
            sample_martingale(&src, 3, 0),
            Err(CharStringError::MartingaleViolation { slot: 1, .. })
        ));
        let zero = MartingaleSource::constant(0.4, 0.0).unwrap();
        assert_eq!(sample_martingale(&zero, 6, 3).unwrap(), cs("000000"));
    }

    #[test]
    fn constant_martingale_couples_with_bernoulli() {
        let src = MartingaleSource::constant(0.4, 0.3).unwrap();
        for seed in 0..20 {
            let a = sample_martingale(&src, 40, seed).unwrap();
            let b = sample_bernoulli(BernoulliParams::new(0.3, 40).unwrap(), seed);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<_> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
