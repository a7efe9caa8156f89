//! Exact probabilities for the joint reach / relative-margin chain under
//! i.i.d. Bernoulli strings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("{0}")]
    BadParams(String),
    #[error("tail sum did not converge (last ratio {ratio}, {steps} steps)")]
    NonConvergent { ratio: f64, steps: usize },
}

fn check_alpha(alpha: f64) -> Result<(), ExactError> {
    if (0.0..=0.5).contains(&alpha) {
        Ok(())
    } else {
        Err(ExactError::BadParams(format!("alpha must lie in [0, 1/2], got {alpha}")))
    }
}

/// Distribution of the initial reach `ρ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachPmf {
    pub probs: Vec<f64>,
    /// Mass of reaches above `r_max`.
    pub tail_mass: f64,
    pub alpha: f64,
}

impl ReachPmf {
    pub fn point_mass() -> Self {
        Self { probs: vec![1.0], tail_mass: 0.0, alpha: 0.0 }
    }

    pub fn r_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn get(&self, r: usize) -> f64 {
        self.probs.get(r).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().copied().collect::<CompensatedSum>().value() + self.tail_mass
    }
}

/// `(2ε/(1+ε))·β^r` with `β = (1−ε)/(1+ε)`, tail `β^{r_max+1}`.
pub fn stationary_pmf(eps: f64, r_max: usize) -> Result<ReachPmf, ExactError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ExactError::BadParams(format!("eps must lie in (0, 1], got {eps}")));
    }
    let beta = (1.0 - eps) / (1.0 + eps);
    let head = 2.0 * eps / (1.0 + eps);
    let mut probs = Vec::with_capacity(r_max + 1);
    let mut power = 1.0;
    for _ in 0..=r_max {
        probs.push(head * power);
        power *= beta;
    }
    Ok(ReachPmf { probs, tail_mass: power, alpha: (1.0 - eps) / 2.0 })
}

/// Law of `ρ` after `m` i.i.d. slots: the walk moves up with probability
/// `alpha` and otherwise down, holding at 0.
pub fn finite_reach_pmf(m: usize, alpha: f64) -> Result<ReachPmf, ExactError> {
    check_alpha(alpha)?;
    let mut p = vec![0.0; m + 1];
    p[0] = 1.0;
    for t in 0..m {
        let mut next = vec![0.0; m + 1];
        for r in 0..=t {
            let v = p[r];
            next[r + 1] += alpha * v;
            next[r.saturating_sub(1)] += (1.0 - alpha) * v;
        }
        p = next;
    }
    Ok(ReachPmf { probs: p, tail_mass: 0.0, alpha })
}

/// Starting distribution of `ρ(x)` for the CLI and the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    Stationary,
    Finite(usize),
}

impl Init {
    /// For the stationary law the truncation point is `k`: every reach above
    /// it keeps the margin nonnegative for `k` slots, so the tail is exact.
    pub fn pmf(self, alpha: f64, k: usize) -> Result<ReachPmf, ExactError> {
        match self {
            Init::Stationary => stationary_pmf(1.0 - 2.0 * alpha, k),
            Init::Finite(m) => finite_reach_pmf(m, alpha),
        }
    }
}

/// `M_t(r, s) = Pr[ρ(xy) = r, μ_x(y) = s]` on `r ∈ [0, r_max]`,
/// `s ∈ [s_min, r_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub step: usize,
    pub alpha: f64,
    pub r_max: usize,
    pub s_min: i64,
    /// Initial tail mass folded into the top reach bucket.
    pub fold_mass: f64,
    data: Vec<f64>,
}

impl ProbMatrix {
    fn width(&self) -> usize {
        (self.r_max as i64 - self.s_min + 1) as usize
    }

    fn idx(&self, r: usize, s: i64) -> usize {
        r * self.width() + (s - self.s_min) as usize
    }

    pub fn s_max(&self) -> i64 {
        self.r_max as i64
    }

    pub fn get(&self, r: usize, s: i64) -> f64 {
        if r > self.r_max || s < self.s_min || s > self.s_max() {
            0.0
        } else {
            self.data[self.idx(r, s)]
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `Σ_{r ≥ 0, s ≥ 0} M(r, s)`.
    pub fn prob_nonneg(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for r in 0..=self.r_max {
            for s in 0..=r as i64 {
                acc.add(self.get(r, s));
            }
        }
        acc.value()
    }

    fn initial(alpha: f64, initial: &ReachPmf, r_max: usize, s_min: i64) -> Self {
        let mut m = Self {
            step: 0,
            alpha,
            r_max,
            s_min,
            fold_mass: initial.tail_mass,
            data: Vec::new(),
        };
        m.data = vec![0.0; (r_max + 1) * m.width()];
        for (r, &p) in initial.probs.iter().enumerate() {
            let i = m.idx(r, r as i64);
            m.data[i] = p;
        }
        let top = initial.r_max();
        let i = m.idx(top, top as i64);
        m.data[i] += initial.tail_mass;
        m
    }

    /// One slot of the chain into `next`, which must have the same shape.
    fn step_into(&self, next: &mut ProbMatrix) {
        next.data.iter_mut().for_each(|x| *x = 0.0);
        let a = self.alpha;
        let lo = (-(self.step as i64)).max(self.s_min);
        for r in 0..=self.r_max {
            for s in lo..=r as i64 {
                let v = self.data[self.idx(r, s)];
                if v == 0.0 {
                    continue;
                }
                let up_r = (r + 1).min(self.r_max);
                let i = next.idx(up_r, (s + 1).min(up_r as i64));
                next.data[i] += a * v;
                let down_s = if r > 0 && s == 0 { 0 } else { s - 1 };
                let i = next.idx(r.saturating_sub(1), down_s);
                next.data[i] += (1.0 - a) * v;
            }
        }
        next.step = self.step + 1;
    }
}

/// The matrix after `k` slots. Bounds are `r_max = initial.r_max + k` and
/// `s_min = −k`, so nothing leaves the grid; the initial tail mass is folded
/// into the top bucket.
pub fn margin_dp(k: usize, alpha: f64, initial: &ReachPmf) -> Result<ProbMatrix, ExactError> {
    check_alpha(alpha)?;
    let r_max = initial.r_max() + k;
    let mut cur = ProbMatrix::initial(alpha, initial, r_max, -(k as i64));
    let mut next = cur.clone();
    for _ in 0..k {
        cur.step_into(&mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// `Pr[μ_x(y) ≥ 0]` for `|y| = k` when `ρ(x)` has law `initial`.
///
/// Equal to `margin_dp(k, …).prob_nonneg()` but prunes states whose outcome
/// is already decided with `R` slots left: `s ≥ R` can no longer become
/// negative and `s < −R` can no longer recover. Reaches above `R + 1` stay
/// positive until the end and share one bucket. Initial tail mass counts as
/// a success, which is exact whenever `initial.r_max + 1 ≥ k`.
pub fn prob_nonneg_margin(k: usize, alpha: f64, initial: &ReachPmf) -> Result<f64, ExactError> {
    check_alpha(alpha)?;
    let mut won = CompensatedSum::new();
    won.add(initial.tail_mass);
    if k == 0 {
        initial.probs.iter().for_each(|&p| won.add(p));
        return Ok(won.value());
    }
    // Layout with R slots left: reach bucket r ∈ [0, R+1], s ∈ [−R, R−1].
    let layout = |rem: usize| (rem + 2, 2 * rem);
    let (rows, width) = layout(k);
    let mut cur = vec![0.0; rows * width];
    for (r, &p) in initial.probs.iter().enumerate() {
        if r >= k {
            won.add(p);
        } else {
            cur[r * width + r + k] = p;
        }
    }
    let a = alpha;
    for rem in (1..=k).rev() {
        let (rows, width) = layout(rem);
        let left = rem - 1;
        let (nrows, nwidth) = layout(left);
        let mut next = vec![0.0; nrows * nwidth];
        let off = rem as i64;
        let noff = left as i64;
        for r in 0..rows {
            let s_hi = (r as i64).min(rem as i64 - 1);
            for s in -(rem as i64)..=s_hi {
                let v = cur[r * width + (s + off) as usize];
                if v == 0.0 {
                    continue;
                }
                let up_r = (r + 1).min(left + 1);
                let up_s = s + 1;
                if up_s >= left as i64 {
                    won.add(a * v);
                } else {
                    next[up_r * nwidth + (up_s + noff) as usize] += a * v;
                }
                let down_r = r.saturating_sub(1).min(left + 1);
                let down_s = if r > 0 && s == 0 { 0 } else { s - 1 };
                if down_s >= left as i64 {
                    won.add((1.0 - a) * v);
                } else if down_s >= -(left as i64) {
                    next[down_r * nwidth + (down_s + noff) as usize] += (1.0 - a) * v;
                }
            }
        }
        cur = next;
    }
    Ok(won.value())
}

/// Streaming chain without a horizon, grown by one row and column per slot.
struct OpenChain {
    alpha: f64,
    r_max: usize,
    steps: usize,
    data: Vec<Vec<f64>>,
}

impl OpenChain {
    fn new(alpha: f64, initial: &ReachPmf) -> Self {
        let r_max = initial.r_max();
        let mut data = vec![Vec::new(); r_max + 1];
        for (r, &p) in initial.probs.iter().enumerate() {
            data[r] = vec![0.0; r + 1];
            data[r][r] = p;
        }
        data[r_max][r_max] += initial.tail_mass;
        Self { alpha, r_max, steps: 0, data }
    }

    // Row r stores s ∈ [−steps, r] at offset steps.
    fn step(&mut self) {
        let off = self.steps as i64;
        let noff = off + 1;
        let r_max = self.r_max + 1;
        let mut next: Vec<Vec<f64>> =
            (0..=r_max).map(|r| vec![0.0; (r as i64 + noff + 1) as usize]).collect();
        let a = self.alpha;
        for (r, row) in self.data.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let s = j as i64 - off;
                next[r + 1][(s + 1 + noff) as usize] += a * v;
                let down_s = if r > 0 && s == 0 { 0 } else { s - 1 };
                next[r.saturating_sub(1)][(down_s + noff) as usize] += (1.0 - a) * v;
            }
        }
        self.data = next;
        self.r_max = r_max;
        self.steps += 1;
    }

    fn nonneg(&self) -> f64 {
        let off = self.steps;
        let mut acc = CompensatedSum::new();
        for row in &self.data {
            row.iter().skip(off).for_each(|&v| acc.add(v));
        }
        acc.value()
    }

    /// Removes and returns the mass with `s ≥ 0`.
    fn absorb_nonneg(&mut self) -> f64 {
        let off = self.steps;
        let mut acc = CompensatedSum::new();
        for row in &mut self.data {
            for v in row.iter_mut().skip(off) {
                acc.add(*v);
                *v = 0.0;
            }
        }
        acc.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub value: f64,
    /// Geometric estimate of the terms beyond `last_t`.
    pub tail_estimate: f64,
    pub last_t: usize,
}

pub const MAX_TAIL_STEPS: usize = 20_000;

/// `Σ_{t ≥ k_min} Pr[μ_x(y) ≥ 0, |y| = t]`. Summation stops at the first
/// term below `rel_tol` times the running sum; that term and everything
/// after it are replaced by `term / (1 − ratio)`.
pub fn settlement_tail(
    k_min: usize,
    alpha: f64,
    initial: &ReachPmf,
    rel_tol: f64,
) -> Result<TailSum, ExactError> {
    check_alpha(alpha)?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(ExactError::BadParams(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let mut chain = OpenChain::new(alpha, initial);
    for _ in 0..k_min {
        chain.step();
    }
    let mut sum = CompensatedSum::new();
    let mut prev: Option<f64> = None;
    let mut rising = 0usize;
    let mut t = k_min;
    loop {
        let term = chain.nonneg();
        if term == 0.0 {
            return Ok(TailSum { value: sum.value(), tail_estimate: 0.0, last_t: t });
        }
        if let Some(p) = prev {
            let ratio = term / p;
            rising = if ratio >= 1.0 { rising + 1 } else { 0 };
            if rising >= 50 || t - k_min >= MAX_TAIL_STEPS {
                return Err(ExactError::NonConvergent { ratio, steps: t - k_min });
            }
            if ratio < 1.0 && term < rel_tol * sum.value() {
                let tail_estimate = term / (1.0 - ratio);
                return Ok(TailSum { value: sum.value() + tail_estimate, tail_estimate, last_t: t });
            }
        }
        sum.add(term);
        prev = Some(term);
        chain.step();
        t += 1;
    }
}

/// Probability that a string of length `horizon` has, for `x` the first
/// `s − 1` slots, some `y` with `k + 1 ≤ |y| ≤ horizon − s + 1` and
/// `μ_x(y) ≥ 0`.
pub fn prob_settlement_violation(
    alpha: f64,
    horizon: usize,
    s: usize,
    k: usize,
) -> Result<f64, ExactError> {
    if s == 0 || s + k > horizon {
        return Err(ExactError::BadParams(format!(
            "need 1 ≤ s and s + k ≤ T (s = {s}, k = {k}, T = {horizon})"
        )));
    }
    let mut chain = OpenChain::new(alpha, &finite_reach_pmf(s - 1, alpha)?);
    let mut hit = CompensatedSum::new();
    for j in 1..=horizon - s + 1 {
        chain.step();
        if j > k {
            hit.add(chain.absorb_nonneg());
        }
    }
    Ok(hit.value())
}
