//! Exhaustive cross-checks of the reach and margin recursions against
//! brute-force enumeration of closed forks, and of A* against the
//! recursions.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{build_canonical_fork, verify_canonical};
use crate::charstring::CharString;
use crate::fork::{brute_margins, MAX_ENUMERATION_LEN};
use crate::margin::{self, step_rho, MarginWalk};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("max_len {0} exceeds the enumeration guard {MAX_ENUMERATION_LEN}")]
    TooLong(usize),
    #[error("{count} mismatches; first: {first}")]
    MismatchFound { count: usize, first: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    pub max_len: usize,
    /// Swap in a recursion with a deliberate fault, to show the harness
    /// notices.
    pub corrupt_recursion: bool,
    /// Also run A* and check its witnesses.
    pub check_canonical: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifySummary {
    pub max_len: usize,
    pub strings: usize,
    pub checks: usize,
}

/// Relative margins with the reset rule dropped, so μ always falls on an
/// honest slot.
fn corrupted_margins(w: &CharString) -> Vec<i64> {
    (0..=w.len())
        .map(|split| {
            let mut walk = MarginWalk::new(split);
            for &b in w.bits() {
                let mu = if walk.position < split {
                    step_rho(walk.rho, b)
                } else if b {
                    walk.mu + 1
                } else {
                    walk.mu - 1
                };
                walk = MarginWalk { split, position: walk.position + 1, rho: step_rho(walk.rho, b), mu };
            }
            walk.mu
        })
        .collect()
}

fn check_string(w: &CharString, opts: &VerifyOptions) -> (usize, Vec<String>) {
    let mut problems = Vec::new();
    let (brute_rho, brute) = match brute_margins(w) {
        Ok(v) => v,
        Err(e) => return (0, vec![format!("{w}: enumeration failed: {e}")]),
    };
    let rho = margin::rho(w);
    if rho != brute_rho {
        problems.push(format!("{w}: rho {rho} vs brute force {brute_rho}"));
    }
    let margins = if opts.corrupt_recursion { corrupted_margins(w) } else { margin::all_relative_margins(w) };
    for (m, (&r, &b)) in margins.iter().zip(&brute).enumerate() {
        if r != b {
            problems.push(format!("{w}: split {m}: recursion {r} vs brute force {b}"));
        }
    }
    let mut checks = 1 + margins.len();
    if opts.check_canonical {
        checks += 1;
        if let Err(e) = verify_canonical(&build_canonical_fork(w), w) {
            problems.push(format!("{w}: canonical fork: {e}"));
        }
    }
    (checks, problems)
}

/// Every string of length at most `max_len`, every split.
pub fn verify_recursion(opts: VerifyOptions) -> Result<VerifySummary, VerifyError> {
    if opts.max_len > MAX_ENUMERATION_LEN {
        return Err(VerifyError::TooLong(opts.max_len));
    }
    let strings: Vec<CharString> = (0..=opts.max_len)
        .flat_map(|n| (0..1u64 << n).map(move |c| CharString::from_code(c, n)))
        .collect();
    let results: Vec<(usize, Vec<String>)> = strings.par_iter().map(|w| check_string(w, &opts)).collect();
    let checks = results.iter().map(|r| r.0).sum();
    let problems: Vec<String> = results.into_iter().flat_map(|r| r.1).collect();
    if let Some(first) = problems.first() {
        return Err(VerifyError::MismatchFound { count: problems.len(), first: first.clone() });
    }
    Ok(VerifySummary { max_len: opts.max_len, strings: strings.len(), checks })
}
