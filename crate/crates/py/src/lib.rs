//! Python bindings: strings, canonical forks, exact probabilities, bounds and
//! the settlement game.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use lcsettle::adversary::build_canonical_fork;
use lcsettle::exactprob::{self, Init};
use lcsettle::fork::to_dot;
use lcsettle::game::{self, CanonicalAdversary, Distribution};
use lcsettle::gfbounds;
use lcsettle::margin;
use lcsettle::verify::{self, VerifyOptions};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "CharString", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyCharString(lcsettle::CharString);

#[pymethods]
impl PyCharString {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        text.parse().map(Self).map_err(value_error)
    }

    /// I.i.d. string with adversarial probability `alpha`.
    #[staticmethod]
    fn sample(alpha: f64, n: usize, seed: u64) -> PyResult<Self> {
        let params = lcsettle::BernoulliParams::new(alpha, n).map_err(value_error)?;
        Ok(Self(lcsettle::charstring::sample_bernoulli(params, seed)))
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("CharString('{}')", self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn rho(&self) -> i64 {
        margin::rho(&self.0)
    }

    fn mu(&self) -> i64 {
        margin::mu(&self.0)
    }

    /// `μ_x(y)` for `x` the first `split` slots.
    fn relative_margin(&self, split: usize) -> PyResult<i64> {
        if split > self.0.len() {
            return Err(value_error(format!("split {split} beyond length {}", self.0.len())));
        }
        let (x, y) = self.0.split_at(split);
        Ok(margin::relative_margin(&x, &y))
    }

    fn all_relative_margins(&self) -> Vec<i64> {
        margin::all_relative_margins(&self.0)
    }

    fn canonical_fork(&self) -> PyFork {
        PyFork { fork: build_canonical_fork(&self.0).fork, w: self.0.clone() }
    }
}

#[pyclass(name = "Fork", frozen)]
struct PyFork {
    fork: lcsettle::Fork,
    w: lcsettle::CharString,
}

#[pymethods]
impl PyFork {
    fn __len__(&self) -> usize {
        self.fork.len()
    }

    #[getter]
    fn height(&self) -> usize {
        self.fork.height()
    }

    fn labels(&self) -> Vec<usize> {
        self.fork.vertices().iter().map(|v| v.label).collect()
    }

    fn parents(&self) -> Vec<Option<usize>> {
        self.fork.vertices().iter().map(|v| v.parent).collect()
    }

    fn reaches(&self) -> Vec<i64> {
        self.fork.reaches(&self.w)
    }

    fn digest(&self) -> String {
        self.fork.digest()
    }

    fn to_json(&self) -> String {
        self.fork.to_json()
    }

    fn to_dot(&self) -> String {
        to_dot(&self.fork, &self.w)
    }
}

fn init_from(initial: Option<usize>) -> Init {
    initial.map_or(Init::Stationary, Init::Finite)
}

/// Exact `Pr[μ_x(y) ≥ 0]` for `|y| = k`; `m` selects a finite prefix of
/// length `m` instead of the stationary start.
#[pyfunction]
#[pyo3(signature = (k, alpha, m=None))]
fn prob_nonneg_margin(k: usize, alpha: f64, m: Option<usize>) -> PyResult<f64> {
    let pmf = init_from(m).pmf(alpha, k).map_err(value_error)?;
    exactprob::prob_nonneg_margin(k, alpha, &pmf).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (k_min, alpha, rel_tol=1e-12))]
fn settlement_tail(k_min: usize, alpha: f64, rel_tol: f64) -> PyResult<f64> {
    let pmf = exactprob::stationary_pmf(1.0 - 2.0 * alpha, k_min + 400).map_err(value_error)?;
    Ok(exactprob::settlement_tail(k_min, alpha, &pmf, rel_tol).map_err(value_error)?.value)
}

#[pyfunction]
fn prob_settlement_violation(alpha: f64, horizon: usize, s: usize, k: usize) -> PyResult<f64> {
    exactprob::prob_settlement_violation(alpha, horizon, s, k).map_err(value_error)
}

#[pyfunction]
fn forkable_tail_bound(k: usize, eps: f64) -> PyResult<f64> {
    gfbounds::forkable_tail_bound(k, eps).map_err(value_error)
}

#[pyfunction]
fn relative_tail_bound(k: usize, eps: f64) -> PyResult<f64> {
    gfbounds::relative_tail_bound(k, eps).map_err(value_error)
}

#[pyfunction]
fn azuma_bound(k: usize, eps: f64) -> f64 {
    gfbounds::azuma_bound(k, eps)
}

#[pyfunction]
fn convergence_radius(eps: f64) -> f64 {
    gfbounds::convergence_radius(eps)
}

/// Plays one audited game with the canonical adversary and returns the
/// transcript as JSON.
#[pyfunction]
fn run_game(w: &PyCharString, s: usize, k: usize) -> PyResult<String> {
    let tr = game::run_game(&w.0, &mut CanonicalAdversary::new(), s, k).map_err(value_error)?;
    Ok(tr.to_json())
}

/// `(estimate, ci95_low, ci95_high)` over `trials` games.
#[pyfunction]
fn monte_carlo_insecurity(
    alpha: f64,
    horizon: usize,
    s: usize,
    k: usize,
    trials: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let est = game::monte_carlo_insecurity(&Distribution::Bernoulli { alpha }, horizon, s, k, trials, seed)
        .map_err(value_error)?;
    Ok((est.estimate, est.ci95.0, est.ci95.1))
}

/// Number of strings checked; raises on any mismatch.
#[pyfunction]
fn verify_recursion(max_len: usize) -> PyResult<usize> {
    let opts = VerifyOptions { max_len, check_canonical: true, ..Default::default() };
    Ok(verify::verify_recursion(opts).map_err(value_error)?.strings)
}

#[pymodule]
#[pyo3(name = "lcsettle")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCharString>()?;
    m.add_class::<PyFork>()?;
    m.add_function(wrap_pyfunction!(prob_nonneg_margin, m)?)?;
    m.add_function(wrap_pyfunction!(settlement_tail, m)?)?;
    m.add_function(wrap_pyfunction!(prob_settlement_violation, m)?)?;
    m.add_function(wrap_pyfunction!(forkable_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(relative_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(azuma_bound, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_radius, m)?)?;
    m.add_function(wrap_pyfunction!(run_game, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_insecurity, m)?)?;
    m.add_function(wrap_pyfunction!(verify_recursion, m)?)?;
    Ok(())
}
