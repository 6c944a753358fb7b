//! Multistart search for SSP methods that satisfy effective order conditions,
//! and for matching starting and stopping methods.
//!
//! At a fixed radius `r` a method is described by its absolutely monotonic
//! form `P = r K (I + rA)^{-1}`. Every row of `P`, together with the slack
//! `1 - sum(row)`, is a point of the probability simplex, written as the
//! squares of a normalized vector. Any parameter vector therefore decodes to
//! a method that is feasible at `r`, and only the order conditions remain.
//! They are solved by Levenberg-Marquardt with a central-difference
//! Jacobian; `r` is pushed up by bisection with warm starts.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::order_conditions::{
    beta_weights, effective_order_residuals, elementary_weights, max_abs, rt_targets, trees_up_to, AlphaWeights,
    BetaWeights, EffectiveOrderSpec, OrderError,
};
use crate::ssp::{shu_osher_matrix, ssp_coefficient, SSPResult, DEFAULT_BISECTION_TOL};
use crate::tableau::ButcherTableau;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    /// No restart met the order conditions at any radius tried. The radius
    /// reported is zero.
    #[error("no restart satisfied the order conditions (best residual {best_residual:.3e}); SSP coefficient {coefficient}")]
    Infeasible { best_residual: f64, coefficient: f64 },
    #[error(transparent)]
    Order(#[from] OrderError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Levenberg-Marquardt iterations per solve.
    pub max_iterations: usize,
    pub residual_tol: f64,
    /// Width of the final radius bracket.
    pub radius_tol: f64,
    /// Half-width of the uniform draw for free perturbation weights.
    pub step_scale: f64,
    /// Stage counts for the starting and stopping methods; `s + 1` and `s`
    /// when unset.
    pub start_stages: Option<usize>,
    pub stop_stages: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_iterations: 200,
            residual_tol: 1e-10,
            radius_tol: 1e-5,
            step_scale: 0.05,
            start_stages: None,
            stop_stages: None,
        }
    }
}

impl SearchConfig {
    fn check(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.residual_tol > 0.0 && self.radius_tol > 0.0 && self.step_scale >= 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MainSearchOutcome {
    pub tableau: ButcherTableau,
    pub ssp: SSPResult,
    pub residuals: Vec<f64>,
    pub spec: EffectiveOrderSpec,
    /// Best radius after each restart, in restart order.
    pub history: Vec<f64>,
}

impl MainSearchOutcome {
    /// Wraps an existing method so it can seed a starting/stopping search.
    pub fn evaluate(tableau: ButcherTableau, spec: EffectiveOrderSpec) -> Self {
        let residuals = effective_order_residuals(&elementary_weights(&tableau), spec);
        let ssp = ssp_coefficient(&tableau, DEFAULT_BISECTION_TOL);
        Self { tableau, ssp, residuals, spec, history: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartStopOutcome {
    pub start: ButcherTableau,
    pub stop: ButcherTableau,
    /// `[0, beta_1, ..., beta_K]` with the free entries filled in.
    pub free_beta: Vec<f64>,
    pub min_radius: f64,
    pub residuals: Vec<f64>,
    /// Whether both methods are at least as SSP as the main method.
    pub success: bool,
    pub history: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Simplex parameterization

fn sphere_dim(stages: usize) -> usize {
    stages * (stages + 1) / 2 + stages
}

fn decode(x: &[f64], stages: usize, r: f64) -> ButcherTableau {
    let s = stages;
    let mut p = vec![vec![0.0; s]; s + 1];
    let mut off = 0;
    for (i, row) in p.iter_mut().enumerate().skip(1) {
        let w = &x[off..off + i + 1];
        off += i + 1;
        let norm: f64 = w.iter().map(|v| v * v).sum();
        if norm > 0.0 {
            for j in 0..i {
                row[j] = w[j] * w[j] / norm;
            }
        }
    }
    let mut ra = vec![vec![0.0; s]; s + 1];
    for i in 1..=s {
        for j in 0..i.min(s) {
            let mut v = p[i][j];
            for k in j + 1..i.min(s) {
                v += p[i][k] * ra[k][j];
            }
            ra[i][j] = v;
        }
    }
    let b: Vec<f64> = ra[s].iter().map(|v| v / r).collect();
    let a: Vec<Vec<f64>> = ra[..s].iter().map(|row| row.iter().map(|v| v / r).collect()).collect();
    let c = a.iter().map(|row| row.iter().sum()).collect();
    ButcherTableau::from_raw(a, b, c)
}

const ENCODE_FLOOR: f64 = 1e-8;

fn encode(t: &ButcherTableau, r: f64) -> Vec<f64> {
    let s = t.stages();
    let p = shu_osher_matrix(t, r);
    let mut x = Vec::with_capacity(sphere_dim(s));
    for (i, row) in p.iter().enumerate().skip(1) {
        let mut entries: Vec<f64> = row[..i].iter().map(|v| (r * v).max(ENCODE_FLOOR)).collect();
        let slack = (1.0 - entries.iter().sum::<f64>()).max(ENCODE_FLOOR);
        entries.push(slack);
        let total: f64 = entries.iter().sum();
        x.extend(entries.iter().map(|v| (v / total).sqrt()));
    }
    x
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

struct Solve {
    x: Vec<f64>,
    residual: f64,
    converged: bool,
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], m: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        for i in 0..m {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Minimum-norm damped steps `dx = -J^T (J J^T + lambda I)^{-1} f`, which
/// suit the underdetermined systems met here.
fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: Vec<f64>, max_iter: usize, tol: f64) -> Solve {
    let mut x = x0;
    let mut fx = f(&x);
    if !finite(&fx) {
        return Solve { x, residual: f64::INFINITY, converged: false };
    }
    let m = fx.len();
    let mut lambda = 1e-3;
    let mut jac = jacobian(&f, &x, m);
    for _ in 0..max_iter {
        let res = max_abs(&fx);
        if res <= tol {
            return Solve { x, residual: res, converged: true };
        }
        let jjt = &jac * jac.transpose();
        let scale = (0..m).map(|i| jjt[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        let mut lhs = jjt.clone();
        for i in 0..m {
            lhs[(i, i)] += lambda * scale;
        }
        let rhs = DVector::from_iterator(m, fx.iter().map(|v| -v));
        let y = match lhs.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let dx = jac.transpose() * y;
        let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
        let ft = f(&trial);
        if finite(&ft) && sum_sq(&ft) < sum_sq(&fx) {
            x = trial;
            fx = ft;
            lambda = (lambda / 5.0).max(1e-15);
            jac = jacobian(&f, &x, m);
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let res = max_abs(&fx);
    Solve { x, residual: res, converged: res <= tol }
}

// ---------------------------------------------------------------------------
// Radius search

trait RadiusProblem: Sync {
    fn dim(&self) -> usize;
    fn residuals(&self, x: &[f64], r: f64) -> Vec<f64>;
    /// Re-expresses the methods encoded at radius `from` at radius `to`.
    fn rescale(&self, x: &[f64], from: f64, to: f64) -> Vec<f64>;
    fn random_start(&self, rng: &mut ChaCha8Rng, config: &SearchConfig) -> Vec<f64>;
    fn radius_cap(&self) -> f64;
}

struct RestartResult {
    radius: f64,
    x: Option<Vec<f64>>,
    best_residual: f64,
}

const DESCENT_STEPS: usize = 12;

fn run_restart<P: RadiusProblem>(problem: &P, config: &SearchConfig, restart: usize) -> RestartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let tol = config.residual_tol;
    let iters = config.max_iterations;
    let mut x = problem.random_start(&mut rng, config);
    let mut hi = problem.radius_cap();
    let mut r = 0.5 * hi;
    let mut best_residual = f64::INFINITY;
    let mut found = None;
    for _ in 0..DESCENT_STEPS {
        let sol = levenberg_marquardt(|z| problem.residuals(z, r), x.clone(), iters, tol);
        best_residual = best_residual.min(sol.residual);
        if sol.converged {
            found = Some(sol.x);
            break;
        }
        hi = r;
        r *= 0.5;
        x = problem.rescale(&sol.x, hi, r);
    }
    let Some(mut best) = found else {
        return RestartResult { radius: 0.0, x: None, best_residual };
    };
    let mut lo = r;
    while hi - lo > config.radius_tol {
        let mid = 0.5 * (lo + hi);
        let warm = problem.rescale(&best, lo, mid);
        let mut sol = levenberg_marquardt(|z| problem.residuals(z, mid), warm, iters, tol);
        if !sol.converged {
            sol = levenberg_marquardt(|z| problem.residuals(z, mid), best.clone(), iters, tol);
        }
        if sol.converged {
            lo = mid;
            best = sol.x;
            best_residual = best_residual.min(sol.residual);
        } else {
            hi = mid;
        }
    }
    // Polish at the accepted radius.
    let sol = levenberg_marquardt(|z| problem.residuals(z, lo), best.clone(), iters, 0.01 * tol);
    if sol.residual <= tol {
        best = sol.x;
    }
    RestartResult { radius: lo, x: Some(best), best_residual }
}

/// Runs every restart (in parallel) and merges by restart index, keeping the
/// first strictly larger radius, so the result matches a serial run.
fn multistart<P: RadiusProblem>(problem: &P, config: &SearchConfig) -> (Vec<RestartResult>, Option<usize>, Vec<f64>) {
    let results: Vec<RestartResult> =
        (0..config.restarts).into_par_iter().map(|k| run_restart(problem, config, k)).collect();
    let mut best: Option<usize> = None;
    let mut history = Vec::with_capacity(results.len());
    for (k, res) in results.iter().enumerate() {
        if res.x.is_some() && best.is_none_or(|b| res.radius > results[b].radius) {
            best = Some(k);
        }
        history.push(best.map_or(0.0, |b| results[b].radius));
    }
    (results, best, history)
}

// ---------------------------------------------------------------------------
// Main methods

struct MainProblem {
    stages: usize,
    spec: EffectiveOrderSpec,
}

impl RadiusProblem for MainProblem {
    fn dim(&self) -> usize {
        sphere_dim(self.stages)
    }

    fn residuals(&self, x: &[f64], r: f64) -> Vec<f64> {
        effective_order_residuals(&elementary_weights(&decode(x, self.stages, r)), self.spec)
    }

    fn rescale(&self, x: &[f64], from: f64, to: f64) -> Vec<f64> {
        encode(&decode(x, self.stages, from), to)
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, _config: &SearchConfig) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    fn radius_cap(&self) -> f64 {
        self.stages as f64
    }
}

/// Searches for an `stages`-stage method of the given effective and classical
/// order with the largest SSP coefficient found.
pub fn optimize_main(stages: usize, spec: EffectiveOrderSpec, config: &SearchConfig) -> Result<MainSearchOutcome, SearchError> {
    config.check()?;
    if stages == 0 {
        return Err(SearchError::InvalidConfig("stage count must be at least 1".into()));
    }
    let problem = MainProblem { stages, spec };
    let (results, best, history) = multistart(&problem, config);
    let Some(k) = best else {
        let best_residual = results.iter().map(|r| r.best_residual).fold(f64::INFINITY, f64::min);
        return Err(SearchError::Infeasible { best_residual, coefficient: 0.0 });
    };
    let tableau = decode(results[k].x.as_ref().unwrap(), stages, results[k].radius);
    let mut outcome = MainSearchOutcome::evaluate(tableau, spec);
    outcome.history = history;
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Starting and stopping methods

struct StartStopProblem {
    alpha: AlphaWeights,
    beta: BetaWeights,
    free: usize,
    start_stages: usize,
    stop_stages: usize,
    conditions: usize,
}

impl StartStopProblem {
    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let nr = sphere_dim(self.start_stages);
        let nt = sphere_dim(self.stop_stages);
        (&x[..nr], &x[nr..nr + nt], &x[nr + nt..])
    }

    fn methods(&self, x: &[f64], r: f64) -> (ButcherTableau, ButcherTableau, Vec<f64>) {
        let (xr, xt, fb) = self.split(x);
        (decode(xr, self.start_stages, r), decode(xt, self.stop_stages, r), fb.to_vec())
    }

    fn targets(&self, free: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let beta = self.beta.with_free(free).expect("free count fixed at construction");
        rt_targets(&self.alpha, &beta).expect("all beta entries resolved")
    }

    fn target_residuals(&self, start: &ButcherTableau, stop: &ButcherTableau, free: &[f64]) -> Vec<f64> {
        let (rho, tau) = self.targets(free);
        let wr = elementary_weights(start);
        let wt = elementary_weights(stop);
        let n = self.conditions;
        let mut out = Vec::with_capacity(2 * n);
        out.extend((1..=n).map(|i| wr[i] - rho[i]));
        out.extend((1..=n).map(|i| wt[i] - tau[i]));
        out
    }
}

impl RadiusProblem for StartStopProblem {
    fn dim(&self) -> usize {
        sphere_dim(self.start_stages) + sphere_dim(self.stop_stages) + self.free
    }

    fn residuals(&self, x: &[f64], r: f64) -> Vec<f64> {
        let (start, stop, free) = self.methods(x, r);
        self.target_residuals(&start, &stop, &free)
    }

    fn rescale(&self, x: &[f64], from: f64, to: f64) -> Vec<f64> {
        let (start, stop, free) = self.methods(x, from);
        let mut out = encode(&start, to);
        out.extend(encode(&stop, to));
        out.extend(free);
        out
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, config: &SearchConfig) -> Vec<f64> {
        let n = sphere_dim(self.start_stages) + sphere_dim(self.stop_stages);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let w = config.step_scale;
        x.extend((0..self.free).map(|_| if w > 0.0 { rng.gen_range(-w..w) } else { 0.0 }));
        x
    }

    fn radius_cap(&self) -> f64 {
        self.start_stages.min(self.stop_stages) as f64
    }
}

/// Jointly searches for SSP starting and stopping methods of the main
/// method, maximizing the smaller of their two SSP coefficients.
pub fn optimize_start_stop(main: &MainSearchOutcome, config: &SearchConfig) -> Result<StartStopOutcome, SearchError> {
    config.check()?;
    let spec = main.spec;
    let s = main.tableau.stages();
    let alpha = elementary_weights(&main.tableau);
    let beta = beta_weights(&alpha, spec, config.residual_tol.max(1e-9))?;
    let free = beta.free_indices().len();
    let problem = StartStopProblem {
        alpha,
        beta,
        free,
        start_stages: config.start_stages.unwrap_or(s + 1),
        stop_stages: config.stop_stages.unwrap_or(s),
        conditions: trees_up_to(spec.q()),
    };
    if problem.start_stages == 0 || problem.stop_stages == 0 {
        return Err(SearchError::InvalidConfig("starting and stopping methods need at least one stage".into()));
    }
    let (results, best, history) = multistart(&problem, config);
    let Some(k) = best else {
        let best_residual = results.iter().map(|r| r.best_residual).fold(f64::INFINITY, f64::min);
        return Err(SearchError::Infeasible { best_residual, coefficient: 0.0 });
    };
    let (start, stop, free_vals) = problem.methods(results[k].x.as_ref().unwrap(), results[k].radius);
    let residuals = problem.target_residuals(&start, &stop, &free_vals);
    let free_beta = problem.beta.with_free(&free_vals)?.resolved()?;
    let r1 = ssp_coefficient(&start, DEFAULT_BISECTION_TOL).coefficient;
    let r2 = ssp_coefficient(&stop, DEFAULT_BISECTION_TOL).coefficient;
    let min_radius = r1.min(r2);
    Ok(StartStopOutcome {
        success: min_radius >= main.ssp.coefficient - config.radius_tol,
        start,
        stop,
        free_beta,
        min_radius,
        residuals,
        history,
    })
}

/// Least-squares fit of a `stages`-stage tableau whose elementary weights
/// `1..=targets.len()` equal `targets`, with no sign constraints.
pub fn fit_elementary_weights(stages: usize, targets: &[f64], config: &SearchConfig) -> Result<ButcherTableau, SearchError> {
    config.check()?;
    let n_lower = stages * (stages - 1) / 2;
    let build = |x: &[f64]| {
        let mut a = vec![vec![0.0; stages]; stages];
        let mut k = 0;
        for i in 1..stages {
            for j in 0..i {
                a[i][j] = x[k];
                k += 1;
            }
        }
        let c = a.iter().map(|row| row.iter().sum()).collect();
        ButcherTableau::from_raw(a, x[n_lower..].to_vec(), c)
    };
    let residuals = |x: &[f64]| {
        let w = elementary_weights(&build(x));
        targets.iter().enumerate().map(|(i, t)| w[i + 1] - t).collect::<Vec<_>>()
    };
    let mut best_residual = f64::INFINITY;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let x0 = (0..n_lower + stages).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let sol = levenberg_marquardt(residuals, x0, config.max_iterations, config.residual_tol);
        if sol.converged {
            return Ok(build(&sol.x));
        }
        best_residual = best_residual.min(sol.residual);
    }
    Err(SearchError::Infeasible { best_residual, coefficient: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_conditions::effective_order;

    #[test]
    fn decode_is_feasible_and_encode_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 1..=5 {
            let x: Vec<f64> = (0..sphere_dim(s)).map(|_| rng.gen_range(0.1..1.0)).collect();
            let r = 0.7 * s as f64;
            let t = decode(&x, s, r);
            assert!(crate::ssp::abs_monotonic(&t, r, 1e-12).feasible);
            let back = decode(&encode(&t, r), s, r);
            for (ra, rb) in t.a().iter().zip(back.a()) {
                for (u, v) in ra.iter().zip(rb) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn finds_three_stage_optimum() {
        let spec = EffectiveOrderSpec::new(3, 2).unwrap();
        let cfg = SearchConfig { restarts: 2, ..SearchConfig::default() };
        let out = optimize_main(3, spec, &cfg).unwrap();
        assert!((out.ssp.coefficient - 1.0).abs() < 1e-3, "{}", out.ssp.coefficient);
        assert!(max_abs(&out.residuals) <= cfg.residual_tol);
        assert!(effective_order(&out.tableau, 1e-9) >= 3);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = EffectiveOrderSpec::new(3, 2).unwrap();
        let cfg = SearchConfig { restarts: 2, seed: 9, ..SearchConfig::default() };
        let a = optimize_main(3, spec, &cfg).unwrap();
        let b = optimize_main(3, spec, &cfg).unwrap();
        assert_eq!(a.tableau, b.tableau);
        assert!(a.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rejects_empty_config() {
        let spec = EffectiveOrderSpec::new(3, 2).unwrap();
        let cfg = SearchConfig { restarts: 0, ..SearchConfig::default() };
        assert!(matches!(optimize_main(3, spec, &cfg), Err(SearchError::InvalidConfig(_))));
    }

    #[test]
    fn fits_prescribed_weights() {
        let targets = [1.0, 0.5, 1.0 / 3.0, 1.0 / 6.0];
        let t = fit_elementary_weights(3, &targets, &SearchConfig::default()).unwrap();
        let w = elementary_weights(&t);
        for (i, v) in targets.iter().enumerate() {
            assert!((w[i + 1] - v).abs() < 1e-10);
        }
    }
}
