//! Reach and relative margin computed by their one-bit recursions.

use crate::charstring::CharString;

/// Joint state of the reach and relative-margin recursions for a fixed
/// split `|x|`. Before the split is reached `mu` mirrors `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MarginWalk {
    pub split: usize,
    pub position: usize,
    pub rho: i64,
    pub mu: i64,
}

impl MarginWalk {
    pub fn new(split: usize) -> Self {
        Self {
            split,
            position: 0,
            rho: 0,
            mu: 0,
        }
    }

    pub fn step(self, adversarial: bool) -> Self {
        walk_step(self, adversarial)
    }

    pub fn past_split(&self) -> bool {
        self.position > self.split
    }
}

/// One slot of ρ(w1) = ρ(w)+1, ρ(w0) = max(ρ(w)−1, 0) and the matching
/// relative-margin rule, which keeps μ at 0 while ρ is strictly positive.
pub fn walk_step(state: MarginWalk, adversarial: bool) -> MarginWalk {
    let position = state.position + 1;
    let rho = step_rho(state.rho, adversarial);
    let mu = if position <= state.split {
        rho
    } else {
        step_mu(state.rho, state.mu, adversarial)
    };
    MarginWalk {
        split: state.split,
        position,
        rho,
        mu,
    }
}

pub fn step_rho(rho: i64, adversarial: bool) -> i64 {
    match (adversarial, rho) {
        (true, r) => r + 1,
        (false, 0) => 0,
        (false, r) => r - 1,
    }
}

/// `rho` is the reach before the bit is appended.
pub fn step_mu(rho: i64, mu: i64, adversarial: bool) -> i64 {
    if adversarial {
        mu + 1
    } else if rho > 0 && mu == 0 {
        0
    } else {
        mu - 1
    }
}

pub fn rho(w: &CharString) -> i64 {
    w.bits().iter().fold(0, |r, &b| step_rho(r, b))
}

pub fn relative_margin(x: &CharString, y: &CharString) -> i64 {
    let mut walk = MarginWalk::new(x.len());
    for &b in x.bits().iter().chain(y.bits()) {
        walk = walk.step(b);
    }
    walk.mu
}

pub fn mu(w: &CharString) -> i64 {
    relative_margin(&CharString::empty(), w)
}

pub fn is_forkable(w: &CharString) -> bool {
    mu(w) >= 0
}

/// `μ_{w[..m]}(w[m..])` for every split `m` in `0..=|w|`.
pub fn all_relative_margins(w: &CharString) -> Vec<i64> {
    (0..=w.len())
        .map(|m| {
            let (x, y) = w.split_at(m);
            relative_margin(&x, &y)
        })
        .collect()
}

/// Trajectory `(ρ(w[..t]), μ_x(w[|x|..t]))` for `t = 0..=|w|`.
pub fn walk_trace(w: &CharString, split: usize) -> Vec<MarginWalk> {
    let mut walk = MarginWalk::new(split);
    let mut trace = vec![walk];
    for &b in w.bits() {
        walk = walk.step(b);
        trace.push(walk);
    }
    trace
}
