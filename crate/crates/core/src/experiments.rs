//! Test problems: inviscid Burgers' equation with an upwind discretization
//! (total variation diagnostics and the largest monotone step), and the
//! van der Pol oscillator (convergence order).

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::integrator::{
    drive, loglog_slope, run_composite, run_single, CompositeScheme, IntegrationError, Ivp, Record, Rhs,
};
use crate::order_conditions::{rt_targets, AlphaWeights, BetaWeights};
use crate::optimizer::{fit_elementary_weights, SearchConfig, SearchError};
use crate::tableau::ButcherTableau;

pub const TV_TOL: f64 = 1e-10;
pub const SIGMA_TOL: f64 = 0.01;
pub const REFERENCE_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("initial data is identically zero")]
    ZeroData,
    #[error("grid needs at least 2 cells, got {0}")]
    Grid(usize),
    #[error("sigma must be positive, got {0}")]
    Sigma(f64),
    #[error("spatial discretization not TVD at half the SSP coefficient (sigma = {sigma})")]
    NotMonotoneAtLowerBracket { sigma: f64 },
    #[error("SSP coefficient of the main method is zero")]
    ZeroCoefficient,
    #[error("reference solution did not converge (last difference {difference:.3e} at {steps} steps)")]
    Reference { difference: f64, steps: usize },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `1/2 - sin(pi x)/4`.
    Continuous,
    /// 1 on `[0.5, 1.5]`, 0 elsewhere.
    SquareWave,
}

/// Uniform periodic grid on `[0, 2)` with points `x_i = i dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurgersGrid {
    pub m: usize,
    pub profile: Profile,
}

impl BurgersGrid {
    pub fn new(m: usize, profile: Profile) -> Result<Self, ExperimentError> {
        if m < 2 {
            return Err(ExperimentError::Grid(m));
        }
        Ok(Self { m, profile })
    }

    pub fn dx(&self) -> f64 {
        2.0 / self.m as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn initial(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let x = self.x(i);
                match self.profile {
                    Profile::Continuous => 0.5 - 0.25 * (PI * x).sin(),
                    Profile::SquareWave => {
                        if (0.5..=1.5).contains(&x) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect()
    }
}

impl Default for BurgersGrid {
    fn default() -> Self {
        Self { m: 200, profile: Profile::Continuous }
    }
}

/// Upwind flux difference `-(f(u_i) - f(u_{i-1}))/dx` with `f(u) = u^2/2`.
pub fn burgers_rhs(grid: &BurgersGrid) -> Rhs {
    let inv_dx = 1.0 / grid.dx();
    Arc::new(move |u: &[f64], out: &mut [f64]| {
        let m = u.len();
        let mut prev = 0.5 * u[m - 1] * u[m - 1];
        for i in 0..m {
            let cur = 0.5 * u[i] * u[i];
            out[i] = -(cur - prev) * inv_dx;
            prev = cur;
        }
    })
}

/// Largest forward Euler step for which the upwind scheme is TVD.
pub fn dt_fe(grid: &BurgersGrid) -> Result<f64, ExperimentError> {
    let norm = grid.initial().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return Err(ExperimentError::ZeroData);
    }
    Ok(grid.dx() / norm)
}

/// Periodic discrete total variation.
pub fn total_variation(u: &[f64]) -> f64 {
    let n = u.len();
    (0..n).map(|i| (u[(i + 1) % n] - u[i]).abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TVDReport {
    pub sigma: f64,
    pub dt: f64,
    pub steps: usize,
    pub final_time: f64,
    /// Total variation of the initial data followed by one entry per step.
    pub tv_series: Vec<f64>,
    pub monotone: bool,
    pub max_increase: f64,
}

impl TVDReport {
    pub fn final_tv(&self) -> f64 {
        *self.tv_series.last().unwrap()
    }

    /// Rows `step, t, TV`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row {
            step: usize,
            t: f64,
            #[serde(rename = "TV")]
            tv: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for (k, &tv) in self.tv_series.iter().enumerate() {
            w.serialize(Row { step: k, t: k as f64 * self.dt, tv })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `first`, then `main` `n_main` times, then `last`, all with step
/// `dt`, recording the total variation after every step.
pub fn tvd_sequence(
    first: &ButcherTableau,
    main: &ButcherTableau,
    last: &ButcherTableau,
    n_main: usize,
    grid: &BurgersGrid,
    sigma: f64,
) -> Result<TVDReport, ExperimentError> {
    if !(sigma > 0.0) {
        return Err(ExperimentError::Sigma(sigma));
    }
    let dt = sigma * dt_fe(grid)?;
    let u0 = grid.initial();
    let n = n_main + 2;
    let mut tv_series = Vec::with_capacity(n + 1);
    tv_series.push(total_variation(&u0));
    let rhs = burgers_rhs(grid);
    let pick = |k: usize| {
        if k == 1 {
            first
        } else if k == n {
            last
        } else {
            main
        }
    };
    drive(pick, &rhs, &u0, dt, n, |_, u| {
        tv_series.push(total_variation(u));
        Ok(())
    })?;
    let max_increase = tv_series.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(TVDReport {
        sigma,
        dt,
        steps: n,
        final_time: n as f64 * dt,
        tv_series,
        monotone: max_increase <= TV_TOL,
        max_increase,
    })
}

/// Number of uniform steps of size `dt` reaching at least `tf`.
pub fn steps_to(tf: f64, dt: f64) -> usize {
    let n = (tf / dt).ceil();
    // Guard against ceil(3.0000000001) from rounding in tf/dt.
    if (n - 1.0) * dt >= tf * (1.0 - 1e-12) {
        (n as usize).saturating_sub(1)
    } else {
        n as usize
    }
}

/// Composite run with `dt = sigma * dt_fe`, `ceil(tf/dt)` steps (at least 3).
pub fn run_tvd(scheme: &CompositeScheme, grid: &BurgersGrid, sigma: f64, tf: f64) -> Result<TVDReport, ExperimentError> {
    if !(sigma > 0.0) {
        return Err(ExperimentError::Sigma(sigma));
    }
    let dt = sigma * dt_fe(grid)?;
    let n = steps_to(tf, dt).max(3);
    tvd_sequence(&scheme.r, &scheme.m, &scheme.t, n - 2, grid, sigma)
}

fn monotone_at(scheme: &CompositeScheme, grid: &BurgersGrid, sigma: f64, tf: f64) -> Result<bool, ExperimentError> {
    match run_tvd(scheme, grid, sigma, tf) {
        Ok(rep) => Ok(rep.monotone),
        Err(ExperimentError::Integration(IntegrationError::NonFinite { .. })) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Largest `sigma` (to `tol`) whose run is monotone, by bisection on
/// `[C/2, 2C]`.
pub fn max_tvd_sigma(scheme: &CompositeScheme, grid: &BurgersGrid, tf: f64, tol: f64) -> Result<f64, ExperimentError> {
    if !(scheme.c > 0.0) {
        return Err(ExperimentError::ZeroCoefficient);
    }
    let (mut lo, mut hi) = (0.5 * scheme.c, 2.0 * scheme.c);
    if !monotone_at(scheme, grid, lo, tf)? {
        return Err(ExperimentError::NotMonotoneAtLowerBracket { sigma: lo });
    }
    if monotone_at(scheme, grid, hi, tf)? {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if monotone_at(scheme, grid, mid, tf)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaRow {
    pub q: u32,
    pub p: u32,
    pub s: usize,
    pub sigma_max: f64,
    #[serde(rename = "percent_over_C")]
    pub percent_over_c: f64,
}

impl SigmaRow {
    pub fn new(q: u32, p: u32, scheme: &CompositeScheme, sigma_max: f64) -> Self {
        Self { q, p, s: scheme.stages(), sigma_max, percent_over_c: 100.0 * (sigma_max / scheme.c - 1.0) }
    }
}

pub fn write_sigma_csv<W: std::io::Write>(rows: &[SigmaRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Non-SSP perturbation pair fitted directly to the perturbation weights:
/// `S` with weights `beta` and `S^{-1}` with the group inverse of `beta`.
/// Both carry negative weights since `beta_1 = 0`.
pub fn naive_perturbation_pair(
    beta: &[f64],
    stages: usize,
    config: &SearchConfig,
) -> Result<(ButcherTableau, ButcherTableau), ExperimentError> {
    let targets = &beta[1..];
    let s = fit_elementary_weights(stages, targets, config)?;
    // The identity element has all weights zero, so the stopping targets
    // for it are exactly the inverse of beta.
    let (_, inverse) = rt_targets(&AlphaWeights([0.0; 18]), &BetaWeights::known(targets)).map_err(SearchError::from)?;
    let s_inv = fit_elementary_weights(stages, &inverse[1..], config)?;
    Ok((s, s_inv))
}

// ---------------------------------------------------------------------------
// van der Pol

pub const VDP_MU: f64 = 2.0;
pub const VDP_TF: f64 = 50.0;

pub fn van_der_pol(mu: f64, u0: [f64; 2], tf: f64) -> Ivp {
    let rhs: Rhs = Arc::new(move |u: &[f64], f: &mut [f64]| {
        f[0] = u[1];
        f[1] = mu * (1.0 - u[0] * u[0]) * u[1] - u[0];
    });
    Ivp { rhs, u0: u0.to_vec(), t0: 0.0, tf }
}

pub fn van_der_pol_default() -> Ivp {
    van_der_pol(VDP_MU, [2.0, 1.0], VDP_TF)
}

fn rk4() -> ButcherTableau {
    ButcherTableau::from_lower(
        &[vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
        vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
    )
    .expect("classical fourth-order tableau")
}

/// State at `tf` from the classical fourth-order method with repeated step
/// halving; accepted once the Richardson error estimate of two successive
/// resolutions is at most `REFERENCE_TOL`.
pub fn reference_solution(ivp: &Ivp) -> Result<Vec<f64>, ExperimentError> {
    let method = rk4();
    let solve = |n: usize| -> Result<Vec<f64>, ExperimentError> {
        let dt = (ivp.tf - ivp.t0) / n as f64;
        Ok(drive(|_| &method, &ivp.rhs, &ivp.u0, dt, n, |_, _| Ok(()))?)
    };
    let mut n = 1000;
    let mut coarse = solve(n)?;
    let mut difference = f64::INFINITY;
    while n < 1 << 24 {
        n *= 2;
        let fine = solve(n)?;
        difference = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if difference / 15.0 <= REFERENCE_TOL {
            return Ok(fine.iter().zip(&coarse).map(|(f, c)| f + (f - c) / 15.0).collect());
        }
        coarse = fine;
    }
    Err(ExperimentError::Reference { difference, steps: n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<usize>,
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// Fitted over points whose error is at least ten times the reference
    /// accuracy.
    pub slope: Option<f64>,
}

impl ConvergenceReport {
    /// Rows `n, dt, error`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "dt", "error"])?;
        for k in 0..self.steps.len() {
            w.write_record(&[self.steps[k].to_string(), self.dts[k].to_string(), self.errors[k].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n = 100 * 2^k`, `k = 2..=7`.
pub fn default_step_counts() -> Vec<usize> {
    (2..=7).map(|k| 100 << k).collect()
}

/// Max-norm errors at the final time of runs produced by `run(n)`.
pub fn convergence_study<F>(ivp: &Ivp, reference: &[f64], steps: &[usize], run: F) -> Result<ConvergenceReport, ExperimentError>
where
    F: Fn(usize) -> Result<Vec<f64>, IntegrationError> + Sync,
{
    let finals: Result<Vec<Vec<f64>>, IntegrationError> = steps.par_iter().map(|&n| run(n)).collect();
    let errors: Vec<f64> = finals?
        .iter()
        .map(|u| u.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let dts: Vec<f64> = steps.iter().map(|&n| (ivp.tf - ivp.t0) / n as f64).collect();
    let (fd, fe): (Vec<f64>, Vec<f64>) =
        dts.iter().zip(&errors).filter(|(_, e)| **e >= 10.0 * REFERENCE_TOL).map(|(d, e)| (*d, *e)).unzip();
    Ok(ConvergenceReport { steps: steps.to_vec(), dts, errors, slope: loglog_slope(&fd, &fe) })
}

pub fn vdp_convergence(scheme: &CompositeScheme) -> Result<ConvergenceReport, ExperimentError> {
    let ivp = van_der_pol_default();
    let reference = reference_solution(&ivp)?;
    convergence_study(&ivp, &reference, &default_step_counts(), |n| {
        Ok(run_composite(scheme, &ivp, n, None)?.final_state().to_vec())
    })
}

/// Main method alone for every step, as a baseline for the composite.
pub fn vdp_convergence_single(tableau: &ButcherTableau) -> Result<ConvergenceReport, ExperimentError> {
    let ivp = van_der_pol_default();
    let reference = reference_solution(&ivp)?;
    convergence_study(&ivp, &reference, &default_step_counts(), |n| {
        Ok(run_single(tableau, &ivp, n, &Record::Final)?.final_state().to_vec())
    })
}
