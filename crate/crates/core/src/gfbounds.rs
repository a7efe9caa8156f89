//! Upper bounds from truncated generating functions and from Azuma's
//! inequality.
//!
//! With `p = (1−ε)/2` and `q = 1 − p` the series are
//! `D = qZ + pZ·D²` (descent time), `A = pZ + qZ·A²` (ascent time),
//! `M̂ = pZ·D + qZ·D·A(Z·D)`, `L̂ = ε/(1 − M̂)` and
//! `B̂ = (1−β)·L̂/(1 − β·D)` with `β = (1−ε)/(1+ε)`. Both `L̂` and `B̂` sum to
//! one, so a tail `1 − Σ_{t<k} c_t` equals `Σ_{t≥k} c_t`; we sum the tail
//! directly and bound the part beyond the truncation by `F(z)/z^{N+1}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GfError {
    #[error("inner series has nonzero constant term {0}")]
    ComposeConstantTerm(f64),
    #[error("{0}")]
    BadParams(String),
}

fn check_eps(eps: f64) -> Result<(), GfError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(GfError::BadParams(format!("eps must lie in (0, 1), got {eps}")))
    }
}

/// Formal power series truncated after `Z^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    /// Pads or truncates `coeffs` to order `n`.
    pub fn new(mut coeffs: Vec<f64>, n: usize) -> Self {
        coeffs.resize(n + 1, 0.0);
        Self { coeffs }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(Vec::new(), n)
    }

    pub fn one(n: usize) -> Self {
        Self::new(vec![1.0], n)
    }

    /// The series `Z`.
    pub fn identity(n: usize) -> Self {
        Self::new(vec![0.0, 1.0], n)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, t: usize) -> f64 {
        self.coeffs.get(t).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        Self::new((0..=n).map(|t| self.coeffs[t] + other.coeffs[t]).collect(), n)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|x| c * x).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        let mut out = vec![0.0; n + 1];
        for (i, &a) in self.coeffs[..=n].iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out[i..].iter_mut().zip(&other.coeffs) {
                *o += a * b;
            }
        }
        Self { coeffs: out }
    }

    /// Multiplication by `Z^j`, keeping the order.
    pub fn shift(&self, j: usize) -> Self {
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        if j <= n {
            out[j..].copy_from_slice(&self.coeffs[..=n - j]);
        }
        Self { coeffs: out }
    }

    /// `self(inner(Z))` by Horner's rule.
    pub fn compose(&self, inner: &Self) -> Result<Self, GfError> {
        if inner.coeff(0) != 0.0 {
            return Err(GfError::ComposeConstantTerm(inner.coeff(0)));
        }
        let n = self.order().min(inner.order());
        let mut acc = Self::new(vec![self.coeffs[n]], n);
        for t in (0..n).rev() {
            acc = acc.mul(inner);
            acc.coeffs[0] += self.coeffs[t];
        }
        Ok(acc)
    }

    /// `1/(1 − self)` for a series without constant term.
    pub fn geometric_inverse(&self) -> Result<Self, GfError> {
        if self.coeff(0) != 0.0 {
            return Err(GfError::ComposeConstantTerm(self.coeff(0)));
        }
        let n = self.order();
        let mut h = vec![0.0; n + 1];
        h[0] = 1.0;
        for t in 1..=n {
            h[t] = (1..=t).map(|j| self.coeffs[j] * h[t - j]).sum();
        }
        Ok(Self { coeffs: h })
    }

    /// `Σ_{t<k} c_t`, compensated.
    pub fn partial_sum(&self, k: usize) -> f64 {
        self.coeffs.iter().take(k).copied().collect::<CompensatedSum>().value()
    }

    /// `Σ_{t=k}^{N} c_t`, summed from the small end.
    pub fn truncated_tail(&self, k: usize) -> f64 {
        if k > self.order() {
            return 0.0;
        }
        self.coeffs[k..].iter().rev().copied().collect::<CompensatedSum>().value()
    }

    /// Value of the truncated polynomial at `z`.
    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }
}

/// Solves `S = a·U + b·U·S²` for a series `U` with `U(0) = 0`.
fn quadratic_fixed_point(u: &PowerSeries, a: f64, b: f64) -> PowerSeries {
    let n = u.order();
    let mut s = vec![0.0; n + 1];
    let mut sq = vec![0.0; n + 1];
    let uc = u.coeffs();
    for t in 1..=n {
        // (U·S²)_t only needs S² up to t−1.
        let m = t - 1;
        sq[m] = (0..=m).map(|i| s[i] * s[m - i]).sum();
        let conv: f64 = (1..=t).map(|j| uc[j] * sq[t - j]).sum();
        s[t] = a * uc[t] + b * conv;
    }
    PowerSeries { coeffs: s }
}

/// Descent time of the biased walk: `D = qZ + pZ·D²`.
pub fn descent_series(n: usize, p: f64) -> PowerSeries {
    quadratic_fixed_point(&PowerSeries::identity(n), 1.0 - p, p)
}

/// Ascent time of the biased walk: `A = pZ + qZ·A²`.
pub fn ascent_series(n: usize, p: f64) -> PowerSeries {
    quadratic_fixed_point(&PowerSeries::identity(n), p, 1.0 - p)
}

/// All series of the construction at one `ε`, truncated at order `n`.
#[derive(Debug, Clone)]
pub struct GfSeries {
    pub eps: f64,
    pub d: PowerSeries,
    pub m_hat: PowerSeries,
    pub l_hat: PowerSeries,
    pub b_hat: PowerSeries,
}

impl GfSeries {
    pub fn new(eps: f64, n: usize) -> Result<Self, GfError> {
        check_eps(eps)?;
        let p = (1.0 - eps) / 2.0;
        let q = 1.0 - p;
        let beta = (1.0 - eps) / (1.0 + eps);
        let d = descent_series(n, p);
        let zd = d.shift(1);
        // A(Z·D) directly from A's own equation with U = Z·D.
        let a_zd = quadratic_fixed_point(&zd, p, q);
        let m_hat = zd.scale(p).add(&zd.mul(&a_zd).scale(q));
        let l_hat = m_hat.geometric_inverse()?.scale(eps);
        let b_hat = l_hat.mul(&d.scale(beta).geometric_inverse()?).scale(1.0 - beta);
        Ok(Self { eps, d, m_hat, l_hat, b_hat })
    }

    pub fn order(&self) -> usize {
        self.d.order()
    }

    /// `1 − Σ_{t<k} ℓ̂_t`.
    pub fn forkable_tail(&self, k: usize) -> f64 {
        let closed = |z: f64| ClosedForms::new(self.eps, z).map(|c| c.l_hat);
        tail_with_remainder(&self.l_hat, k, self.eps, closed)
    }

    /// `1 − Σ_{t<k} b̂_t`.
    pub fn relative_tail(&self, k: usize) -> f64 {
        let closed = |z: f64| ClosedForms::new(self.eps, z).map(|c| c.b_hat);
        tail_with_remainder(&self.b_hat, k, self.eps, closed)
    }
}

/// Closed forms of the series at a real point `z > 0` inside the radius.
#[derive(Debug, Clone, Copy)]
struct ClosedForms {
    l_hat: f64,
    b_hat: f64,
}

impl ClosedForms {
    fn new(eps: f64, z: f64) -> Option<Self> {
        let p = (1.0 - eps) / 2.0;
        let q = 1.0 - p;
        let beta = (1.0 - eps) / (1.0 + eps);
        let disc = |x: f64| 1.0 - 4.0 * p * q * x * x;
        if disc(z) < 0.0 {
            return None;
        }
        let d = (1.0 - disc(z).sqrt()) / (2.0 * p * z);
        let u = z * d;
        if disc(u) < 0.0 {
            return None;
        }
        let a = (1.0 - disc(u).sqrt()) / (2.0 * q * u);
        let m = p * u + q * u * a;
        if m >= 1.0 || beta * d >= 1.0 {
            return None;
        }
        let l_hat = eps / (1.0 - m);
        Some(Self { l_hat, b_hat: (1.0 - beta) * l_hat / (1.0 - beta * d) })
    }
}

fn tail_with_remainder(
    series: &PowerSeries,
    k: usize,
    eps: f64,
    closed: impl Fn(f64) -> Option<f64>,
) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let n = series.order();
    let head = series.truncated_tail(k);
    // Nonnegative coefficients give Σ_{t>N} c_t ≤ F(z)/z^{N+1} for 1 < z < R.
    let radius = convergence_radius(eps);
    let remainder = (1..64)
        .filter_map(|j| {
            let z = 1.0 + (radius - 1.0) * j as f64 / 64.0;
            closed(z).map(|f| (f.ln() - (n + 1) as f64 * z.ln()).exp())
        })
        .fold(f64::INFINITY, f64::min);
    let remainder = if remainder.is_finite() { remainder } else { 1.0 };
    (head + remainder).clamp(0.0, 1.0)
}

/// Largest truncation order chosen automatically.
pub const MAX_ORDER: usize = 20_000;

/// Truncation order for tails up to `k_max`: at least `4·k_max`, and long
/// enough past `k_max` that the remainder bound is negligible, which near
/// `ε = 0` needs many terms since coefficients shrink like `R^{−t}`.
pub fn default_order(k_max: usize, eps: f64) -> usize {
    let settle = (40.0 / convergence_radius(eps).ln()).ceil();
    let settle = if settle.is_finite() { settle.min(MAX_ORDER as f64) as usize } else { MAX_ORDER };
    (4 * k_max).max(k_max + settle).clamp(64, MAX_ORDER.max(4 * k_max))
}

/// Upper bound on `Pr[μ(w) ≥ 0]` for `|w| = k`.
pub fn forkable_tail_bound(k: usize, eps: f64) -> Result<f64, GfError> {
    Ok(GfSeries::new(eps, default_order(k, eps))?.forkable_tail(k))
}

/// Upper bound on `Pr[μ_x(y) ≥ 0]` for `|y| = k` and any `|x|`.
pub fn relative_tail_bound(k: usize, eps: f64) -> Result<f64, GfError> {
    Ok(GfSeries::new(eps, default_order(k, eps))?.relative_tail(k))
}

/// Radius of convergence of `L̂`, roughly `1 + ε³/2`.
pub fn convergence_radius(eps: f64) -> f64 {
    let a = 1.0 / (1.0 + eps);
    (a * (2.0 / (1.0 - eps * eps).sqrt() - a)).sqrt()
}

pub fn azuma_bound(k: usize, eps: f64) -> f64 {
    let e4 = eps.powi(4);
    (3.0 * (-(k as f64) * e4 / (64.0 + 35.0 * eps)).exp()).min(1.0)
}

pub fn azuma_forkable_bound(k: usize, eps: f64) -> f64 {
    let e4 = eps.powi(4);
    (-2.0 * e4 * k as f64 / (1.0 + 35.0 * eps)).exp().min(1.0)
}
