//! The settlement game between a longest-chain challenger and an adversary
//! who sees the whole characteristic string in advance.
//!
//! Adversaries answer with growth: `(parent, label)` vertices appended to
//! the current fork. Appending can only produce forks that contain the old
//! one, so the prefix relation of the game holds by construction and only
//! the new vertices need checking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{balancing_growth, extension_tine, witness_for_split};
use crate::charstring::{
    derive_seed, rng_from_seed, sample_bernoulli_with, sample_martingale_with, BernoulliParams,
    CharString, MartingaleSource,
};
use crate::fork::{is_prefix, tine_order, validate, Fork, Tine};
use crate::margin::MarginWalk;
use crate::stats::{wilson_interval, Z95};

/// Vertices to append, in order. A parent may refer to a vertex added
/// earlier in the same growth.
pub type Growth = Vec<(usize, usize)>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("adversary forfeits at slot {slot}: {reason}")]
    InvalidAdversaryFork { slot: usize, reason: String },
    #[error("{0}")]
    BadParams(String),
}

pub trait AdversaryStrategy {
    /// Called once with the full string before slot 1.
    fn begin(&mut self, _w: &CharString, _s: usize, _k: usize) {}

    /// Picks among the longest tines on an honest slot.
    fn tie_break(&mut self, fork: &Fork, candidates: &[Tine], slot: usize) -> Tine;

    /// Growth on an adversarial slot; `prefix` already includes the slot.
    fn adversarial_move(&mut self, _fork: &Fork, _prefix: &CharString) -> Growth {
        Vec::new()
    }

    /// Growth after every slot.
    fn augment(&mut self, _fork: &Fork, _prefix: &CharString) -> Growth {
        Vec::new()
    }
}

fn least_tine(fork: &Fork, candidates: &[Tine]) -> Tine {
    *candidates
        .iter()
        .min_by(|a, b| tine_order(fork, **a, **b))
        .expect("a fork always has a longest tine")
}

/// Adds nothing and lets the challenger take the least longest tine.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopAdversary;

impl AdversaryStrategy for NoopAdversary {
    fn tie_break(&mut self, fork: &Fork, candidates: &[Tine], _slot: usize) -> Tine {
        least_tine(fork, candidates)
    }
}

/// Keeps the game fork equal to the A* fork of the prefix. Before an honest
/// slot it lays down the adversarial part of the conservative extension so
/// that the challenger's vertex completes it; once `μ_x(y) ≥ 0` for
/// `|x| = s−1` and `|y| ≥ k+1` it balances the witness pair.
#[derive(Debug, Clone, Default)]
pub struct CanonicalAdversary {
    w: CharString,
    s: usize,
    k: usize,
    walk: Option<MarginWalk>,
    pending: Option<Tine>,
}

impl CanonicalAdversary {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, fork: &Fork, prefix: &CharString) -> Growth {
        let t = extension_tine(fork, prefix);
        let gap = fork.height() - fork.depth(t.0);
        let labels = (fork.label(t.0) + 1..=prefix.len()).filter(|&i| prefix.is_adversarial(i));
        let mut growth = Vec::with_capacity(gap);
        let mut parent = t.0;
        for label in labels.take(gap) {
            growth.push((parent, label));
            parent = fork.len() + growth.len() - 1;
        }
        self.pending = Some(Tine(parent));
        growth
    }
}

impl AdversaryStrategy for CanonicalAdversary {
    fn begin(&mut self, w: &CharString, s: usize, k: usize) {
        *self = Self { w: w.clone(), s, k, walk: Some(MarginWalk::new(s - 1)), pending: None };
    }

    fn tie_break(&mut self, fork: &Fork, candidates: &[Tine], _slot: usize) -> Tine {
        match self.pending.take() {
            Some(t) if candidates.contains(&t) => t,
            _ => {
                let w = self.w.prefix(fork.vertices().iter().map(|v| v.label).max().unwrap_or(0));
                let t = extension_tine(fork, &w);
                if candidates.contains(&t) {
                    t
                } else {
                    least_tine(fork, candidates)
                }
            }
        }
    }

    fn augment(&mut self, fork: &Fork, prefix: &CharString) -> Growth {
        let t = prefix.len();
        let walk = self.walk.get_or_insert_with(|| MarginWalk::new(self.s.saturating_sub(1)));
        while walk.position < t {
            *walk = walk.step(prefix.is_adversarial(walk.position + 1));
        }
        if t >= self.s + self.k && walk.mu >= 0 {
            let pair = witness_for_split(fork, prefix, self.s - 1);
            if let Ok(growth) = balancing_growth(fork, prefix, pair) {
                return growth;
            }
        }
        if t < self.w.len() && self.w.is_honest(t + 1) {
            return self.prepare(fork, prefix);
        }
        Vec::new()
    }
}

/// Distinct maximum-length tines whose last common vertex has a label below
/// `s`, if any.
pub fn unsettled_witness(fork: &Fork, s: usize) -> Option<(Tine, Tine)> {
    let longest = fork.longest_tines();
    if longest.len() < 2 {
        return None;
    }
    // First vertex of each path labelled at least `s`; two tines diverge
    // before `s` exactly when these differ or one path has none.
    let key = |t: Tine| {
        let mut v = t.0;
        let mut first = None;
        while fork.label(v) >= s {
            first = Some(v);
            v = fork.parent(v).expect("the root has label 0");
        }
        first
    };
    let keys: Vec<Option<usize>> = longest.iter().map(|&t| key(t)).collect();
    for i in 0..longest.len() {
        for j in i + 1..longest.len() {
            if keys[i].is_none() || keys[j].is_none() || keys[i] != keys[j] {
                return Some((longest[i], longest[j]));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Lose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub honest: bool,
    pub fork_after_challenger: String,
    pub fork_after_augmentation: String,
    pub tie_break: Option<Tine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub w: String,
    pub s: usize,
    pub k: usize,
    pub records: Vec<SlotRecord>,
    pub outcome: Outcome,
    pub winning_slot: Option<usize>,
    pub witness: Option<(Tine, Tine)>,
    /// `A_t` at the winning slot, or at the last slot.
    pub final_fork: Fork,
}

impl GameTranscript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameMode {
    /// Full axiom and prefix checks plus digests after every step.
    Audit,
    /// Checks only the appended vertices.
    Fast,
}

fn check_params(w: &CharString, s: usize, k: usize) -> Result<(), GameError> {
    if s == 0 || s + k > w.len() {
        return Err(GameError::BadParams(format!(
            "need 1 <= s and s + k <= T, got s={s}, k={k}, T={}",
            w.len()
        )));
    }
    Ok(())
}

/// Appends `growth` after checking that every new vertex is adversarial,
/// labelled at most `t` and above its parent.
fn apply_checked(fork: &mut Fork, growth: &[(usize, usize)], w: &CharString, t: usize) -> Result<(), GameError> {
    for &(parent, label) in growth {
        let bad = |reason: String| GameError::InvalidAdversaryFork { slot: t, reason };
        if parent >= fork.len() {
            return Err(bad(format!("unknown parent {parent}")));
        }
        if label == 0 || label > t {
            return Err(bad(format!("label {label} outside 1..={t}")));
        }
        if !w.is_adversarial(label) {
            return Err(bad(format!("vertex for honest slot {label}")));
        }
        if fork.label(parent) >= label {
            return Err(bad(format!("label {label} not above parent label {}", fork.label(parent))));
        }
        fork.push_vertex(parent, label);
    }
    Ok(())
}

struct Step<'a> {
    w: &'a CharString,
    s: usize,
    k: usize,
    mode: GameMode,
    fork: Fork,
    records: Vec<SlotRecord>,
}

impl Step<'_> {
    fn audit(&self, before: &Fork, t: usize) -> Result<(), GameError> {
        let prefix = self.w.prefix(t);
        validate(&self.fork, &prefix).map_err(|e| GameError::InvalidAdversaryFork {
            slot: t,
            reason: e.to_string(),
        })?;
        if !is_prefix(before, &self.fork) {
            return Err(GameError::InvalidAdversaryFork {
                slot: t,
                reason: "previous fork is not a prefix".into(),
            });
        }
        Ok(())
    }

    fn run(mut self, adversary: &mut dyn AdversaryStrategy) -> Result<GameTranscript, GameError> {
        check_params(self.w, self.s, self.k)?;
        adversary.begin(self.w, self.s, self.k);
        let audit = self.mode == GameMode::Audit;
        for t in 1..=self.w.len() {
            let prefix = self.w.prefix(t);
            let before = if audit { Some(self.fork.clone()) } else { None };
            let mut chosen = None;
            if self.w.is_honest(t) {
                let candidates = self.fork.longest_tines();
                let pick = adversary.tie_break(&self.fork, &candidates, t);
                if !candidates.contains(&pick) {
                    return Err(GameError::InvalidAdversaryFork {
                        slot: t,
                        reason: format!("tie-break chose {} which is not a longest tine", pick.0),
                    });
                }
                self.fork.push_vertex(pick.0, t);
                chosen = Some(pick);
            } else {
                let growth = adversary.adversarial_move(&self.fork, &prefix);
                apply_checked(&mut self.fork, &growth, self.w, t)?;
            }
            let after_challenger = if audit {
                self.audit(before.as_ref().expect("kept in audit mode"), t)?;
                self.fork.digest()
            } else {
                String::new()
            };
            let growth = adversary.augment(&self.fork, &prefix);
            let mid = if audit && !growth.is_empty() { Some(self.fork.clone()) } else { None };
            apply_checked(&mut self.fork, &growth, self.w, t)?;
            if let Some(mid) = &mid {
                self.audit(mid, t)?;
            }
            if audit {
                self.records.push(SlotRecord {
                    slot: t,
                    honest: self.w.is_honest(t),
                    fork_after_challenger: after_challenger,
                    fork_after_augmentation: self.fork.digest(),
                    tie_break: chosen,
                });
            }
            if t >= self.s + self.k {
                if let Some(pair) = unsettled_witness(&self.fork, self.s) {
                    return Ok(self.finish(Outcome::Win, Some(t), Some(pair)));
                }
            }
        }
        Ok(self.finish(Outcome::Lose, None, None))
    }

    fn finish(self, outcome: Outcome, winning_slot: Option<usize>, witness: Option<(Tine, Tine)>) -> GameTranscript {
        GameTranscript {
            w: self.w.to_string(),
            s: self.s,
            k: self.k,
            records: self.records,
            outcome,
            winning_slot,
            witness,
            final_fork: self.fork,
        }
    }
}

pub fn play_game(
    w: &CharString,
    adversary: &mut dyn AdversaryStrategy,
    s: usize,
    k: usize,
    mode: GameMode,
) -> Result<GameTranscript, GameError> {
    Step { w, s, k, mode, fork: Fork::trivial(), records: Vec::new() }.run(adversary)
}

/// The game with full checks after every step.
pub fn run_game(
    w: &CharString,
    adversary: &mut dyn AdversaryStrategy,
    s: usize,
    k: usize,
) -> Result<GameTranscript, GameError> {
    play_game(w, adversary, s, k, GameMode::Audit)
}

/// Re-checks a win from the stored fork alone.
pub fn verify_win(transcript: &GameTranscript) -> bool {
    let (Some(t), Some((a, b))) = (transcript.winning_slot, transcript.witness) else {
        return transcript.outcome == Outcome::Lose;
    };
    let Ok(w) = transcript.w.parse::<CharString>() else {
        return false;
    };
    let fork = &transcript.final_fork;
    let s = transcript.s;
    let h = fork.height();
    transcript.outcome == Outcome::Win
        && t >= s + transcript.k
        && validate(fork, &w.prefix(t)).is_ok()
        && a != b
        && fork.contains(a)
        && fork.contains(b)
        && fork.depth(a.0) == h
        && fork.depth(b.0) == h
        && fork.meet_label(a.0, b.0) < s
}

/// Whether some `y` with `|y| ≥ k+1` after `x = w[..s−1]` has `μ_x(y) ≥ 0`.
pub fn canonical_win_predicate(w: &CharString, s: usize, k: usize) -> bool {
    let mut walk = MarginWalk::new(s - 1);
    for (i, &b) in w.bits().iter().enumerate() {
        walk = walk.step(b);
        if i + 1 >= s + k && walk.mu >= 0 {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone)]
pub enum Distribution {
    Bernoulli { alpha: f64 },
    Martingale(MartingaleSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsecurityEstimate {
    pub wins: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci95: (f64, f64),
}

/// String for trial `index` of a run.
pub fn trial_string(dist: &Distribution, t: usize, seed: u64, index: u64) -> Result<CharString, GameError> {
    let mut rng = rng_from_seed(derive_seed(seed, index));
    match dist {
        Distribution::Bernoulli { alpha } => {
            let params = BernoulliParams::new(*alpha, t).map_err(|e| GameError::BadParams(e.to_string()))?;
            Ok(sample_bernoulli_with(params, &mut rng))
        }
        Distribution::Martingale(src) => {
            sample_martingale_with(src, t, &mut rng).map_err(|e| GameError::BadParams(e.to_string()))
        }
    }
}

/// Win frequency of the canonical adversary over `trials` independent games.
pub fn monte_carlo_insecurity(
    dist: &Distribution,
    t: usize,
    s: usize,
    k: usize,
    trials: u64,
    seed: u64,
) -> Result<InsecurityEstimate, GameError> {
    if trials == 0 {
        return Err(GameError::BadParams("trials must be at least 1".into()));
    }
    check_params(&CharString::zeros(t), s, k)?;
    if let Distribution::Bernoulli { alpha } = dist {
        BernoulliParams::new(*alpha, t).map_err(|e| GameError::BadParams(e.to_string()))?;
    }
    let wins = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<u64, GameError> {
            let w = trial_string(dist, t, seed, i)?;
            let mut adv = CanonicalAdversary::new();
            let tr = play_game(&w, &mut adv, s, k, GameMode::Fast)?;
            Ok(u64::from(tr.outcome == Outcome::Win))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(InsecurityEstimate {
        wins,
        trials,
        estimate: wins as f64 / trials as f64,
        ci95: wilson_interval(wins, trials, Z95),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(s: &str) -> CharString {
        s.parse().unwrap()
    }

    /// Builds two chains of adversarial vertices from genesis.
    struct TwinChains;

    impl AdversaryStrategy for TwinChains {
        fn tie_break(&mut self, fork: &Fork, candidates: &[Tine], _slot: usize) -> Tine {
            least_tine(fork, candidates)
        }

        fn adversarial_move(&mut self, fork: &Fork, prefix: &CharString) -> Growth {
            let t = prefix.len();
            if fork.len() == 1 {
                return vec![(0, t), (0, t)];
            }
            let ends = fork.longest_tines();
            ends.iter().map(|e| (e.0, t)).collect()
        }
    }

    /// Returns a vertex for an honest slot.
    struct Cheater;

    impl AdversaryStrategy for Cheater {
        fn tie_break(&mut self, fork: &Fork, candidates: &[Tine], _slot: usize) -> Tine {
            least_tine(fork, candidates)
        }

        fn augment(&mut self, _fork: &Fork, prefix: &CharString) -> Growth {
            vec![(0, prefix.len())]
        }
    }

    #[test]
    fn all_zeros_is_a_chain() {
        let w = CharString::zeros(10);
        let tr = run_game(&w, &mut NoopAdversary, 2, 3).unwrap();
        assert_eq!(tr.outcome, Outcome::Lose);
        assert_eq!(tr.final_fork.len(), 11);
        let tr = run_game(&w, &mut CanonicalAdversary::new(), 2, 3).unwrap();
        assert_eq!(tr.outcome, Outcome::Lose);
        assert_eq!(tr.final_fork.height(), 10);
    }

    #[test]
    fn twin_chains_win_on_all_ones() {
        let w = CharString::ones(4);
        let tr = run_game(&w, &mut TwinChains, 1, 1).unwrap();
        assert_eq!(tr.outcome, Outcome::Win);
        assert_eq!(tr.winning_slot, Some(2));
        assert!(verify_win(&tr));
    }

    #[test]
    fn honest_labels_are_rejected() {
        let w = cs("0000");
        let err = run_game(&w, &mut Cheater, 1, 1).unwrap_err();
        assert!(matches!(err, GameError::InvalidAdversaryFork { slot: 1, .. }));
        let err = play_game(&w, &mut Cheater, 1, 1, GameMode::Fast).unwrap_err();
        assert!(matches!(err, GameError::InvalidAdversaryFork { slot: 1, .. }));
    }

    #[test]
    fn bad_params() {
        let w = cs("0101");
        assert!(matches!(run_game(&w, &mut NoopAdversary, 0, 1), Err(GameError::BadParams(_))));
        assert!(matches!(run_game(&w, &mut NoopAdversary, 2, 3), Err(GameError::BadParams(_))));
    }

    #[test]
    fn canonical_wins_example() {
        let w = cs("010100110");
        let tr = run_game(&w, &mut CanonicalAdversary::new(), 1, 7).unwrap();
        assert_eq!(tr.outcome, Outcome::Win);
        // μ(01010011) = 1 already, at |y| = 8 = s + k − 1 + 1.
        assert_eq!(tr.winning_slot, Some(8));
        assert!(verify_win(&tr));
        assert!(canonical_win_predicate(&w, 1, 7));
    }

    #[test]
    fn canonical_on_all_ones() {
        for t in 2..8 {
            for s in 1..t {
                for k in 0..=t - s {
                    let tr = run_game(&CharString::ones(t), &mut CanonicalAdversary::new(), s, k).unwrap();
                    assert_eq!(tr.outcome, Outcome::Win, "T={t} s={s} k={k}");
                    assert!(verify_win(&tr));
                }
            }
        }
    }

    #[test]
    fn canonical_matches_predicate_small() {
        for n in 4..=10 {
            for code in 0..(1u64 << n) {
                let w = CharString::from_code(code, n);
                let tr = run_game(&w, &mut CanonicalAdversary::new(), 2, 2).unwrap();
                assert_eq!(tr.outcome == Outcome::Win, canonical_win_predicate(&w, 2, 2), "{w}");
                assert!(verify_win(&tr));
                let fast = play_game(&w, &mut CanonicalAdversary::new(), 2, 2, GameMode::Fast).unwrap();
                assert_eq!(fast.outcome, tr.outcome);
                assert_eq!(fast.final_fork, tr.final_fork);
            }
        }
    }

    #[test]
    fn transcripts_are_deterministic() {
        let w = cs("0110100101");
        let a = run_game(&w, &mut CanonicalAdversary::new(), 2, 3).unwrap();
        let b = run_game(&w, &mut CanonicalAdversary::new(), 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len() as usize, a.winning_slot.unwrap_or(w.len()));
        let back: GameTranscript = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn monte_carlo_extremes() {
        let zero = monte_carlo_insecurity(&Distribution::Bernoulli { alpha: 0.0 }, 20, 3, 4, 50, 1).unwrap();
        assert_eq!(zero.wins, 0);
        let one = monte_carlo_insecurity(&Distribution::Bernoulli { alpha: 1.0 }, 20, 3, 4, 50, 1).unwrap();
        assert_eq!(one.estimate, 1.0);
        let a = monte_carlo_insecurity(&Distribution::Bernoulli { alpha: 0.4 }, 30, 3, 4, 200, 9).unwrap();
        let b = monte_carlo_insecurity(&Distribution::Bernoulli { alpha: 0.4 }, 30, 3, 4, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.ci95.0 <= a.estimate && a.estimate <= a.ci95.1);
        assert!(monte_carlo_insecurity(&Distribution::Bernoulli { alpha: 0.4 }, 30, 3, 4, 0, 9).is_err());
    }

    #[test]
    fn martingale_games_run() {
        let src = MartingaleSource::constant(0.2, 0.4).unwrap();
        let est = monte_carlo_insecurity(&Distribution::Martingale(src), 30, 3, 4, 100, 5).unwrap();
        assert!(est.estimate > 0.0 && est.estimate < 1.0);
    }
}
