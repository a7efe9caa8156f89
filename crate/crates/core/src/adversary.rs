//! Fork-building adversaries: the fixed-split strategy that realizes one
//! relative margin, and the online strategy A* whose forks realize every
//! relative margin at once.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charstring::CharString;
use crate::fork::{self, append_conservative, is_closed, tine_order, validate, Fork, Tine};
use crate::margin;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("early-divergence witness requested for an empty tine set")]
    EmptySet,
    #[error("tine pair ({0}, {1}) cannot be extended to a balanced fork")]
    NotBalanceable(usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("witness for split {0} does not realize the relative margin")]
    WitnessMismatch(usize),
    #[error("fork is not canonical: {0}")]
    NotCanonical(String),
}

/// Tines of maximal reach, in creation order.
fn argmax(reach: &[i64], among: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut best = i64::MIN;
    let mut out = Vec::new();
    for v in among {
        match reach[v].cmp(&best) {
            Ordering::Greater => {
                best = reach[v];
                out.clear();
                out.push(v);
            }
            Ordering::Equal => out.push(v),
            Ordering::Less => {}
        }
    }
    out
}

fn least(fork: &Fork, tines: impl Iterator<Item = usize>) -> Option<usize> {
    tines.min_by(|&a, &b| tine_order(fork, Tine(a), Tine(b)))
}

/// Among pairs `(ta, tb) ∈ a × b` minimizing `ℓ(ta ∩ tb)`, the least pair
/// under the tine order (first component, then second).
pub fn early_divergence_witness(
    fork: &Fork,
    a: &[Tine],
    b: &[Tine],
) -> Result<(Tine, Tine), AdversaryError> {
    if a.is_empty() || b.is_empty() {
        return Err(AdversaryError::EmptySet);
    }
    let mut best = usize::MAX;
    let mut pairs = Vec::new();
    for &ta in a {
        for &tb in b {
            let l = fork.meet_label(ta.0, tb.0);
            if l < best {
                best = l;
                pairs.clear();
            }
            if l == best {
                pairs.push((ta, tb));
            }
        }
    }
    Ok(pairs
        .into_iter()
        .min_by(|x, y| tine_order(fork, x.0, y.0).then_with(|| tine_order(fork, x.1, y.1)))
        .expect("nonempty sets give at least one pair"))
}

fn tines(ids: &[usize]) -> Vec<Tine> {
    ids.iter().copied().map(Tine).collect()
}

/// The tine A* extends on an honest slot: the zero-reach tine diverging
/// earliest from the maximal-reach tines, or the unique longest tine when
/// no tine has reach zero.
pub fn extension_tine(fork: &Fork, w: &CharString) -> Tine {
    let reach = fork.reaches(w);
    let zero: Vec<Tine> = (0..fork.len()).filter(|&v| reach[v] == 0).map(Tine).collect();
    if zero.is_empty() {
        return fork.longest_tines()[0];
    }
    let top = tines(&argmax(&reach, 0..fork.len()));
    early_divergence_witness(fork, &zero, &top)
        .expect("both sets are nonempty")
        .0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalForkResult {
    pub fork: Fork,
    pub witness_rho: Tine,
    /// Split `m` maps to `(τ_ρx, τ_x)` for `x = w[..m]`.
    pub witnesses: BTreeMap<usize, Option<(Tine, Tine)>>,
    /// The pair for `x = w[..n-1]`, which the last slot designates from the
    /// maximal-reach tines before and after it.
    pub witness_w: Option<(Tine, Tine)>,
}

/// Incremental A*: one conservative extension per honest slot, nothing on
/// adversarial slots.
#[derive(Debug, Clone)]
pub struct CanonicalBuilder {
    w: CharString,
    fork: Fork,
    prev_len: usize,
    prev_height: usize,
}

impl Default for CanonicalBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl CanonicalBuilder {
    pub fn new() -> Self {
        Self { w: CharString::empty(), fork: Fork::trivial(), prev_len: 1, prev_height: 0 }
    }

    pub fn fork(&self) -> &Fork {
        &self.fork
    }

    pub fn string(&self) -> &CharString {
        &self.w
    }

    pub fn push(&mut self, adversarial: bool) {
        self.prev_len = self.fork.len();
        self.prev_height = self.fork.height();
        if !adversarial {
            let s = extension_tine(&self.fork, &self.w);
            append_conservative(&mut self.fork, &self.w, s.0);
        }
        self.w.push(adversarial);
    }

    /// Witness designations for the current prefix.
    pub fn result(&self) -> CanonicalForkResult {
        let fork = &self.fork;
        let w = &self.w;
        let n = w.len();
        let reach = fork.reaches(w);
        let top = argmax(&reach, 0..fork.len());
        let witness_rho = Tine(least(fork, top.iter().copied()).expect("reach has a maximum"));
        let mut witnesses = BTreeMap::new();
        if n == 0 {
            return CanonicalForkResult { fork: fork.clone(), witness_rho, witnesses, witness_w: None };
        }

        let old = w.prefix(n - 1);
        let ones = old.ones_prefix_counts();
        let old_reach: Vec<i64> = (0..self.prev_len)
            .map(|v| {
                let reserve = (ones[n - 1] - ones[fork.label(v)]) as i64;
                reserve - (self.prev_height - fork.depth(v)) as i64
            })
            .collect();
        let old_top = argmax(&old_reach, 0..self.prev_len);
        let top_t = tines(&top);
        let (tau_w, tau_rho_w) =
            early_divergence_witness(fork, &tines(&old_top), &top_t).expect("nonempty");
        let witness_w = Some((tau_rho_w, tau_w));

        // Earliest divergence of each tine from the maximal-reach set.
        let min_meet: Vec<usize> = (0..fork.len())
            .map(|t| top.iter().map(|&r| fork.meet_label(t, r)).min().expect("nonempty"))
            .collect();
        for m in 0..n - 1 {
            let disjoint = (0..fork.len()).filter(|&t| min_meet[t] <= m);
            let best = tines(&argmax(&reach, disjoint));
            let pair = early_divergence_witness(fork, &best, &top_t)
                .ok()
                .map(|(tau_x, tau_rho_x)| (tau_rho_x, tau_x));
            witnesses.insert(m, pair);
        }
        witnesses.insert(n - 1, witness_w);
        CanonicalForkResult { fork: fork.clone(), witness_rho, witnesses, witness_w }
    }
}

pub fn build_canonical_fork(w: &CharString) -> CanonicalForkResult {
    let mut builder = CanonicalBuilder::new();
    for &b in w.bits() {
        builder.push(b);
    }
    builder.result()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    /// `(split, tine)` for witnesses whose terminal vertex is adversarial.
    pub non_honest_witnesses: Vec<(usize, Tine)>,
    /// Splits without a designated pair, checked by exhaustive scan instead.
    pub absent_splits: Vec<usize>,
}

pub fn verify_canonical(
    result: &CanonicalForkResult,
    w: &CharString,
) -> Result<VerifyReport, CanonicalError> {
    let fork = &result.fork;
    validate(fork, w).map_err(|e| CanonicalError::NotCanonical(e.to_string()))?;
    if !is_closed(fork, w) {
        return Err(CanonicalError::NotCanonical("fork is not closed".into()));
    }
    let reach = fork.reaches(w);
    let rho = margin::rho(w);
    if !fork.contains(result.witness_rho) || reach[result.witness_rho.0] != rho {
        return Err(CanonicalError::NotCanonical(format!("reach witness does not attain rho = {rho}")));
    }
    let margins = margin::all_relative_margins(w);
    let mut report = VerifyReport::default();
    let mut exhaustive: Option<Vec<i64>> = None;
    for (m, &expected) in margins.iter().enumerate().take(w.len()) {
        match result.witnesses.get(&m) {
            None => return Err(CanonicalError::WitnessMismatch(m)),
            Some(None) => {
                let best = exhaustive.get_or_insert_with(|| fork::fork_margins(fork, w).1);
                if best[m] != expected {
                    return Err(CanonicalError::WitnessMismatch(m));
                }
                report.absent_splits.push(m);
            }
            Some(Some((a, b))) => {
                if !fork.contains(*a) || !fork.contains(*b) || fork.meet_label(a.0, b.0) > m {
                    return Err(CanonicalError::WitnessMismatch(m));
                }
                if reach[a.0].min(reach[b.0]) != expected {
                    return Err(CanonicalError::WitnessMismatch(m));
                }
                for t in [*a, *b] {
                    if w.is_adversarial(fork.label(t.0)) && !report.non_honest_witnesses.contains(&(m, t)) {
                        report.non_honest_witnesses.push((m, t));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Fixed-split strategy: on each honest slot conservatively extend the
/// zero-reach tine that diverges earliest from a maximal-reach tine `t_ρ`.
/// Once the prefix passes the split, `t_ρ` is taken from a pair witnessing
/// the fork's relative margin.
pub fn build_margin_optimal_fork(x: &CharString, y: &CharString) -> Fork {
    let w = x.concat(y);
    let split = x.len();
    let mut fork = Fork::trivial();
    for i in 0..w.len() {
        if w.bits()[i] {
            continue;
        }
        let prefix = w.prefix(i);
        let reach = fork.reaches(&prefix);
        let zero: Vec<usize> = (0..fork.len()).filter(|&v| reach[v] == 0).collect();
        let s = if zero.is_empty() {
            fork.longest_tines()[0].0
        } else {
            let top = argmax(&reach, 0..fork.len());
            let t_rho = if i > split {
                margin_partner_top(&fork, &reach, &top, split)
            } else {
                least(&fork, top.iter().copied()).expect("nonempty")
            };
            let earliest = zero.iter().map(|&z| fork.meet_label(z, t_rho)).min().expect("nonempty");
            least(&fork, zero.into_iter().filter(|&z| fork.meet_label(z, t_rho) == earliest))
                .expect("nonempty")
        };
        append_conservative(&mut fork, &prefix, s);
    }
    fork
}

/// The maximal-reach tine whose best split-disjoint partner has the largest
/// reach; ties go to the least tine.
fn margin_partner_top(fork: &Fork, reach: &[i64], top: &[usize], split: usize) -> usize {
    let partner = |r: usize| {
        (0..fork.len())
            .filter(|&t| fork.meet_label(t, r) <= split)
            .map(|t| reach[t])
            .max()
            .unwrap_or(i64::MIN)
    };
    let best = top.iter().map(|&r| partner(r)).max().expect("nonempty");
    least(fork, top.iter().copied().filter(|&r| partner(r) == best)).expect("nonempty")
}

/// A split-`m` witness pair `(τ_ρx, τ_x)`: `τ_x` has the largest reach among
/// tines diverging from some maximal-reach tine no later than slot `m`.
pub fn witness_for_split(fork: &Fork, w: &CharString, m: usize) -> (Tine, Tine) {
    let reach = fork.reaches(w);
    let top = argmax(&reach, 0..fork.len());
    let disjoint = (0..fork.len()).filter(|&t| top.iter().any(|&r| fork.meet_label(t, r) <= m));
    let best = tines(&argmax(&reach, disjoint));
    let (tau_x, tau_rho_x) = early_divergence_witness(fork, &best, &tines(&top))
        .expect("the root diverges from every tine at slot 0");
    (tau_rho_x, tau_x)
}

/// New vertices extending both tines of a nonnegative-reach pair to a
/// common maximal length, as `(parent, label)` entries for
/// [`Fork::apply_growth`]. If the pair is a single tine already of full
/// length, both copies grow by one extra vertex so the results differ.
pub fn balancing_growth(
    fork: &Fork,
    w: &CharString,
    pair: (Tine, Tine),
) -> Result<Vec<(usize, usize)>, AdversaryError> {
    let reach = fork.reaches(w);
    let (a, b) = (pair.0 .0, pair.1 .0);
    let not_ok = AdversaryError::NotBalanceable(a, b);
    if reach[a] < 0 || reach[b] < 0 {
        return Err(not_ok);
    }
    let extra = usize::from(a == b && fork.depth(a) == fork.height());
    if extra > 0 && reach[a] < 1 {
        return Err(not_ok);
    }
    let mut growth = Vec::new();
    let mut next_id = fork.len();
    let targets: &[usize] = if a == b { &[a, a] } else { &[a, b] };
    for &t in targets {
        let need = fork.height() - fork.depth(t) + extra;
        let labels = (fork.label(t) + 1..=w.len()).filter(|&i| w.is_adversarial(i)).take(need);
        let mut parent = t;
        for label in labels {
            growth.push((parent, label));
            parent = next_id;
            next_id += 1;
        }
    }
    Ok(growth)
}
