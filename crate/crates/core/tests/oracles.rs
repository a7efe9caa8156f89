//! Probabilities checked against direct enumeration or sampling of strings,
//! with the margin recursion as the only shared piece.

use lcsettle::charstring::{derive_seed, rng_from_seed};
use lcsettle::exactprob::{finite_reach_pmf, prob_nonneg_margin, stationary_pmf, ReachPmf};
use lcsettle::fork::brute_margins;
use lcsettle::gfbounds::{azuma_bound, forkable_tail_bound, relative_tail_bound};
use lcsettle::margin::{mu, relative_margin};
use lcsettle::CharString;
use rand::Rng;

fn weight(w: &CharString, alpha: f64) -> f64 {
    let ones = w.count_ones() as i32;
    alpha.powi(ones) * (1.0 - alpha).powi(w.len() as i32 - ones)
}

/// `Pr[μ_x(y) ≥ 0]` with `|x| = m`, `|y| = k` by summing over all strings.
fn enumerate_relative(m: usize, k: usize, alpha: f64) -> f64 {
    (0..1u64 << (m + k))
        .map(|c| CharString::from_code(c, m + k))
        .filter(|w| {
            let (x, y) = w.split_at(m);
            relative_margin(&x, &y) >= 0
        })
        .map(|w| weight(&w, alpha))
        .sum()
}

#[test]
fn dp_matches_enumeration() {
    for &alpha in &[0.1, 0.3, 0.45] {
        for (m, k) in [(0, 1), (0, 9), (3, 6), (7, 7), (10, 5)] {
            let dp = prob_nonneg_margin(k, alpha, &finite_reach_pmf(m, alpha).unwrap()).unwrap();
            let brute = enumerate_relative(m, k, alpha);
            assert!((dp - brute).abs() < 1e-11 * brute, "alpha={alpha} m={m} k={k}: {dp} vs {brute}");
        }
    }
}

#[test]
fn point_mass_is_forkability() {
    // Through brute-force forks rather than the recursion.
    for k in 1..=8 {
        let alpha = 0.3;
        let brute: f64 = (0..1u64 << k)
            .map(|c| CharString::from_code(c, k))
            .filter(|w| brute_margins(w).unwrap().1[0] >= 0)
            .map(|w| weight(&w, alpha))
            .sum();
        let dp = prob_nonneg_margin(k, alpha, &ReachPmf::point_mass()).unwrap();
        assert!((dp - brute).abs() < 1e-14, "k={k}");
    }
}

#[test]
fn dp_matches_sampling() {
    let (alpha, m, k, n) = (0.3, 20, 15, 1_000_000u64);
    let mut rng = rng_from_seed(derive_seed(77, 0));
    let mut hits = 0u64;
    for _ in 0..n {
        let w = CharString::new((0..m + k).map(|_| rng.random::<f64>() < alpha).collect());
        let (x, y) = w.split_at(m);
        hits += u64::from(relative_margin(&x, &y) >= 0);
    }
    let p = prob_nonneg_margin(k, alpha, &finite_reach_pmf(m, alpha).unwrap()).unwrap();
    let freq = hits as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((freq - p).abs() <= 4.0 * sigma, "{freq} vs {p}");
}

#[test]
fn bounds_dominate_enumeration() {
    for &alpha in &[0.2, 0.35] {
        let eps = 1.0 - 2.0 * alpha;
        for k in [4, 10, 14] {
            let forkable: f64 = (0..1u64 << k)
                .map(|c| CharString::from_code(c, k))
                .filter(|w| mu(w) >= 0)
                .map(|w| weight(&w, alpha))
                .sum();
            assert!(forkable <= forkable_tail_bound(k, eps).unwrap());
            let relative = prob_nonneg_margin(k, alpha, &stationary_pmf(eps, 4 * k).unwrap()).unwrap();
            assert!(relative <= relative_tail_bound(k, eps).unwrap());
            assert!(forkable <= relative + 1e-15);
        }
    }
}

#[test]
fn azuma_dominates_exact() {
    for &alpha in &[0.05, 0.2, 0.35] {
        let eps = 1.0 - 2.0 * alpha;
        for k in (50..=400).step_by(50) {
            let p = prob_nonneg_margin(k, alpha, &stationary_pmf(eps, k).unwrap()).unwrap();
            assert!(p <= azuma_bound(k, eps), "alpha={alpha} k={k}");
        }
    }
}
