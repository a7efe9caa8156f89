//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::time::{Duration, Instant};

use lcsettle::adversary::{build_canonical_fork, verify_canonical};
use lcsettle::charstring::{derive_seed, rng_from_seed, sample_bernoulli_with, BernoulliParams};
use lcsettle::exactprob::{
    finite_reach_pmf, prob_nonneg_margin, prob_settlement_violation, settlement_tail, stationary_pmf, Init,
};
use lcsettle::game::{
    canonical_win_predicate, monte_carlo_insecurity, run_game, verify_win, CanonicalAdversary, Distribution,
    Outcome,
};
use lcsettle::gfbounds::{azuma_bound, convergence_radius, default_order, GfSeries};
use lcsettle::stats::linear_fit;
use lcsettle::verify::{verify_recursion, VerifyOptions};
use lcsettle::CharString;
use rand::Rng;
use rayon::prelude::*;

const ALPHAS: [f64; 8] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40];

/// Published exact probabilities, rows k = 50, 100, …, 1000, columns ALPHAS.
const TABLE: [[f64; 8]; 20] = [
    [5.37e-15, 1.16e-09, 1.02e-06, 8.68e-05, 1.96e-03, 1.86e-02, 9.36e-02, 2.92e-01],
    [1.23e-28, 5.10e-18, 3.52e-12, 2.28e-08, 1.03e-05, 8.00e-04, 1.72e-02, 1.37e-01],
    [2.83e-42, 2.24e-26, 1.22e-17, 6.05e-12, 5.54e-08, 3.57e-05, 3.30e-03, 6.74e-02],
    [6.49e-56, 9.82e-35, 4.21e-23, 1.61e-15, 2.98e-10, 1.60e-06, 6.40e-04, 3.36e-02],
    [1.49e-69, 4.31e-43, 1.46e-28, 4.27e-19, 1.61e-12, 7.21e-08, 1.25e-04, 1.69e-02],
    [3.42e-83, 1.89e-51, 5.05e-34, 1.14e-22, 8.67e-15, 3.25e-09, 2.44e-05, 8.52e-03],
    [7.84e-97, 8.29e-60, 1.75e-39, 3.02e-26, 4.67e-17, 1.46e-10, 4.78e-06, 4.31e-03],
    [1.80e-110, 3.64e-68, 6.06e-45, 8.02e-30, 2.52e-19, 6.59e-12, 9.37e-07, 2.18e-03],
    [4.13e-124, 1.60e-76, 2.10e-50, 2.13e-33, 1.36e-21, 2.97e-13, 1.84e-07, 1.11e-03],
    [9.47e-138, 7.00e-85, 7.26e-56, 5.67e-37, 7.32e-24, 1.34e-14, 3.60e-08, 5.62e-04],
    [2.17e-151, 3.07e-93, 2.51e-61, 1.51e-40, 3.95e-26, 6.02e-16, 7.05e-09, 2.86e-04],
    [4.98e-165, 1.35e-101, 8.70e-67, 4.00e-44, 2.13e-28, 2.71e-17, 1.38e-09, 1.45e-04],
    [1.14e-178, 5.91e-110, 3.01e-72, 1.06e-47, 1.15e-30, 1.22e-18, 2.71e-10, 7.37e-05],
    [2.62e-192, 2.59e-118, 1.04e-77, 2.83e-51, 6.19e-33, 5.51e-20, 5.31e-11, 3.75e-05],
    [6.02e-206, 1.14e-126, 3.61e-83, 7.52e-55, 3.33e-35, 2.48e-21, 1.04e-11, 1.91e-05],
    [1.38e-219, 4.99e-135, 1.25e-88, 2.00e-58, 1.80e-37, 1.12e-22, 2.04e-12, 9.69e-06],
    [3.17e-233, 2.19e-143, 4.33e-94, 5.31e-62, 9.69e-40, 5.04e-24, 4.00e-13, 4.93e-06],
    [7.27e-247, 9.61e-152, 1.50e-99, 1.41e-65, 5.23e-42, 2.27e-25, 7.84e-14, 2.50e-06],
    [1.67e-260, 4.22e-160, 5.19e-105, 3.75e-69, 2.82e-44, 1.02e-26, 1.54e-14, 1.27e-06],
    [3.83e-274, 1.85e-168, 1.80e-110, 9.98e-73, 1.52e-46, 4.61e-28, 3.01e-15, 6.48e-07],
];

const KEY_CELLS: [(f64, usize, f64); 6] = [
    (0.05, 50, 5.37e-15),
    (0.25, 50, 1.96e-03),
    (0.10, 100, 5.10e-18),
    (0.40, 100, 1.37e-01),
    (0.40, 1000, 6.48e-07),
    (0.05, 1000, 3.83e-274),
];

const TABLE_REL_TOL: f64 = 0.01;
const GRID_BUDGET: Duration = Duration::from_secs(600);
const COLUMN_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_BUDGET: Duration = Duration::from_secs(600);
const R2_MIN: f64 = 0.999;
const DECAY_REL_TOL: f64 = 0.10;
const MC_SIGMAS: f64 = 4.0;

fn ks() -> Vec<usize> {
    (1..=20).map(|i| 50 * i).collect()
}

fn exact(alpha: f64, k: usize) -> f64 {
    prob_nonneg_margin(k, alpha, &Init::Stationary.pmf(alpha, k).unwrap()).unwrap()
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

/// `grid[a][j]` is the exact value at `ALPHAS[a]`, `ks()[j]`.
fn table_reproduction(report: &mut Report) -> Vec<Vec<f64>> {
    let start = Instant::now();
    let column: Vec<Vec<f64>> = ALPHAS
        .par_iter()
        .map(|&a| ks().into_iter().take_while(|&k| k <= 400).map(|k| exact(a, k)).collect())
        .collect();
    let column_time = start.elapsed();
    let rest: Vec<Vec<f64>> = ALPHAS
        .par_iter()
        .map(|&a| ks().into_iter().filter(|&k| k > 400).map(|k| exact(a, k)).collect())
        .collect();
    let grid_time = start.elapsed();
    let grid: Vec<Vec<f64>> = column.into_iter().zip(rest).map(|(mut a, b)| {
        a.extend(b);
        a
    }).collect();

    let lookup = |alpha: f64, k: usize| {
        let a = ALPHAS.iter().position(|&x| (x - alpha).abs() < 1e-12).unwrap();
        grid[a][k / 50 - 1]
    };
    let key_worst = KEY_CELLS.iter().map(|&(a, k, want)| rel_err(lookup(a, k), want)).fold(0.0, f64::max);
    let mut all_worst = 0.0f64;
    let mut within = 0;
    for (j, row) in TABLE.iter().enumerate() {
        for (a, &want) in row.iter().enumerate() {
            let e = rel_err(grid[a][j], want);
            all_worst = all_worst.max(e);
            within += usize::from(e <= TABLE_REL_TOL);
        }
    }
    let pass = key_worst <= TABLE_REL_TOL && grid_time <= GRID_BUDGET && column_time <= COLUMN_BUDGET;
    report.line(
        "1 table reproduction",
        pass,
        format!(
            "key cells max rel err {:.2e} (tol {TABLE_REL_TOL}); all 160 cells within tol: {within}/160, max rel err {:.2e}; \
             k<=400 columns {:.1}s (<= {}s); full grid {:.1}s (<= {}s)",
            key_worst,
            all_worst,
            column_time.as_secs_f64(),
            COLUMN_BUDGET.as_secs(),
            grid_time.as_secs_f64(),
            GRID_BUDGET.as_secs()
        ),
    );
    grid
}

fn oracle_equivalence(report: &mut Report) {
    let start = Instant::now();
    let result = verify_recursion(VerifyOptions { max_len: 8, ..Default::default() });
    let elapsed = start.elapsed();
    let detail = match &result {
        Ok(s) => format!("{} strings, {} checks, 0 mismatches", s.strings, s.checks),
        Err(e) => e.to_string(),
    };
    report.line(
        "2 oracle equivalence",
        result.is_ok() && elapsed <= ORACLE_BUDGET,
        format!("{detail}; {:.1}s (<= {}s)", elapsed.as_secs_f64(), ORACLE_BUDGET.as_secs()),
    );
}

fn canonical_forks(report: &mut Report) {
    let mut failures = 0;
    let mut checked = 0;
    for (ai, &alpha) in [0.2, 0.35, 0.5].iter().enumerate() {
        for i in 0..1000u64 {
            let mut rng = rng_from_seed(derive_seed(0xC0FFEE + ai as u64, i));
            let n = rng.random_range(1..=24);
            let w = sample_bernoulli_with(BernoulliParams::new(alpha, n).unwrap(), &mut rng);
            checked += 1;
            if verify_canonical(&build_canonical_fork(&w), &w).is_err() {
                failures += 1;
            }
        }
    }
    report.line(
        "3 canonical fork",
        failures == 0,
        format!("{checked} strings at alpha in {{0.2, 0.35, 0.5}}, {failures} failures"),
    );
}

fn dominance(report: &mut Report, grid: &[Vec<f64>]) {
    let ks: Vec<usize> = (1..=8).map(|i| 50 * i).collect();
    let results: Vec<(usize, usize, usize, usize)> = ALPHAS
        .par_iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let eps = 1.0 - 2.0 * alpha;
            let gf = GfSeries::new(eps, default_order(400, eps)).unwrap();
            let (mut gf_bad, mut az_bad, mut init_bad, mut checks) = (0, 0, 0, 0);
            for (j, &k) in ks.iter().enumerate() {
                let p = grid[a][j];
                gf_bad += usize::from(p > gf.relative_tail(k));
                az_bad += usize::from(p > azuma_bound(k, eps));
                // The stationary start with every reach kept, not folded at k.
                let stat = prob_nonneg_margin(k, alpha, &stationary_pmf(eps, 2 * k).unwrap()).unwrap();
                for m in [0, 10, 100, 1000] {
                    let fin = prob_nonneg_margin(k, alpha, &finite_reach_pmf(m, alpha).unwrap()).unwrap();
                    init_bad += usize::from(fin > stat * (1.0 + 1e-12));
                    checks += 1;
                }
                checks += 2;
            }
            (gf_bad, az_bad, init_bad, checks)
        })
        .collect();
    let sum = |f: fn(&(usize, usize, usize, usize)) -> usize| results.iter().map(f).sum::<usize>();
    let (gf_bad, az_bad, init_bad, checks) = (sum(|r| r.0), sum(|r| r.1), sum(|r| r.2), sum(|r| r.3));
    report.line(
        "4 dominance",
        gf_bad + az_bad + init_bad == 0,
        format!(
            "{checks} comparisons; violations: gf bound {gf_bad}, azuma bound {az_bad}, finite vs stationary start {init_bad}"
        ),
    );
}

fn decay_shape(report: &mut Report, grid: &[Vec<f64>]) {
    let xs: Vec<f64> = ks().iter().map(|&k| k as f64).collect();
    let mut worst_r2 = 1.0f64;
    for row in grid {
        let ys: Vec<f64> = row.iter().map(|p| p.log10()).collect();
        worst_r2 = worst_r2.min(linear_fit(&xs, &ys).unwrap().r_squared);
    }
    let eps = 0.5;
    let gf = GfSeries::new(eps, default_order(2000, eps)).unwrap();
    // Local slope on [1500, 2000] keeps the polynomial prefactor's share of
    // the rate small.
    let rate = (gf.forkable_tail(1500).ln() - gf.forkable_tail(2000).ln()) / 500.0;
    let target = convergence_radius(eps).ln();
    let err = rel_err(rate, target);
    report.line(
        "5 exponential decay",
        worst_r2 >= R2_MIN && err <= DECAY_REL_TOL,
        format!(
            "min R^2 of log10 p vs k over alphas {worst_r2:.6} (>= {R2_MIN}); gf decay rate at k=2000 {rate:.5} vs ln R {target:.5}, rel err {err:.3} (<= {DECAY_REL_TOL})"
        ),
    );
}

fn game(report: &mut Report) {
    let (s, k) = (3, 4);
    let mut games = 0;
    let mut mismatches = 0;
    let mut unsound = 0;
    for t in s + k..=14 {
        let part: Vec<(usize, usize, usize)> = (0..1u64 << t)
            .into_par_iter()
            .map(|code| {
                let w = CharString::from_code(code, t);
                let tr = run_game(&w, &mut CanonicalAdversary::new(), s, k).unwrap();
                let won = tr.outcome == Outcome::Win;
                (1, usize::from(won != canonical_win_predicate(&w, s, k)), usize::from(won && !verify_win(&tr)))
            })
            .collect();
        for (g, m, u) in part {
            games += g;
            mismatches += m;
            unsound += u;
        }
    }

    let (alpha, horizon, ms, mk, trials) = (0.3, 100, 10, 10, 100_000u64);
    let start = Instant::now();
    let est = monte_carlo_insecurity(&Distribution::Bernoulli { alpha }, horizon, ms, mk, trials, 2024).unwrap();
    let mc_time = start.elapsed();
    let predicted = prob_settlement_violation(alpha, horizon, ms, mk).unwrap();
    let sigma = (predicted * (1.0 - predicted) / trials as f64).sqrt();
    let z = (est.estimate - predicted) / sigma;
    let tail = settlement_tail(mk, alpha, &stationary_pmf(1.0 - 2.0 * alpha, 400).unwrap(), 1e-12).unwrap();
    let pass = mismatches == 0 && unsound == 0 && z.abs() <= MC_SIGMAS && est.estimate <= tail.value;
    report.line(
        "6 game soundness and equivalence",
        pass,
        format!(
            "{games} exhaustive games (T<=14, s=3, k=4): {mismatches} predicate mismatches, {unsound} unverified wins; \
             Monte Carlo {trials} games: {:.4} (95% CI {:.4}..{:.4}), exact {predicted:.4}, z = {z:.2} (|z| <= {MC_SIGMAS}), \
             tail sum {:.4} >= estimate; {:.1}s",
            est.estimate,
            est.ci95.0,
            est.ci95.1,
            tail.value,
            mc_time.as_secs_f64()
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut report = Report { failures: 0 };
    let grid = table_reproduction(&mut report);
    oracle_equivalence(&mut report);
    canonical_forks(&mut report);
    let before = report.failures;
    dominance(&mut report, &grid);
    decay_shape(&mut report, &grid);
    let substitutes_ok = report.failures == before;
    game(&mut report);
    report.line(
        "7 asymptotic claims",
        substitutes_ok,
        "not directly checkable; covered by the explicit dominance (4) and linear-in-k decay (5) checks above".into(),
    );
    println!(
        "acceptance: {} of 7 criteria passed in {:.1}s",
        7 - report.failures,
        start.elapsed().as_secs_f64()
    );
    if report.failures > 0 {
        std::process::exit(1);
    }
}
