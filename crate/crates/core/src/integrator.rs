//! Fixed-step explicit Runge–Kutta integration, with single methods and with
//! the starting/main/stopping composite `T M^{n-2} R`.

use std::sync::Arc;

use thiserror::Error;

use crate::order_conditions::{
    beta_weights, elementary_weights, max_abs, rt_targets, trees_up_to, EffectiveOrderSpec, OrderError,
};
use crate::ssp::{ssp_coefficient, DEFAULT_BISECTION_TOL};
use crate::tableau::{ButcherTableau, ShuOsherForm};

/// Autonomous right-hand side `F(u)`, written into the output slice.
pub type Rhs = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

pub const SCHEME_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    /// `stage` is 1-based; `s + 1` denotes the final combination.
    #[error("non-finite state at step {step}, stage {stage}")]
    NonFinite { step: usize, stage: usize },
    #[error("step size must be positive, got {0}")]
    StepSize(f64),
    #[error("at least one step is required")]
    NoSteps,
    #[error("composite scheme requires at least 3 steps, got {0}")]
    TooFewSteps(usize),
    #[error("cannot observe step {step} of {n}: observable steps are 2..n")]
    Observation { step: usize, n: usize },
    #[error("initial value problem: {0}")]
    Problem(String),
    #[error("starting/stopping methods do not match the main method (residual {residual:.3e})")]
    SchemeMismatch { residual: f64 },
    #[error(transparent)]
    Order(#[from] OrderError),
}

#[derive(Clone)]
pub struct Ivp {
    pub rhs: Rhs,
    pub u0: Vec<f64>,
    pub t0: f64,
    pub tf: f64,
}

impl std::fmt::Debug for Ivp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ivp").field("u0", &self.u0).field("t0", &self.t0).field("tf", &self.tf).finish()
    }
}

impl Ivp {
    pub fn new(rhs: Rhs, u0: Vec<f64>, t0: f64, tf: f64) -> Result<Self, IntegrationError> {
        if !(tf > t0) {
            return Err(IntegrationError::Problem(format!("final time {tf} must exceed initial time {t0}")));
        }
        if u0.is_empty() {
            return Err(IntegrationError::Problem("empty initial state".into()));
        }
        Ok(Self { rhs, u0, t0, tf })
    }
}

/// Stage storage reused across steps.
#[derive(Debug, Clone)]
pub struct Workspace {
    k: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Workspace {
    pub fn new(stages: usize, dim: usize) -> Self {
        Self { k: vec![vec![0.0; dim]; stages], y: vec![0.0; dim] }
    }

    fn fit(&mut self, stages: usize, dim: usize) {
        if self.k.len() < stages || self.y.len() != dim {
            *self = Self::new(stages.max(self.k.len()), dim);
        }
    }
}

/// One step in place. On failure `u` is left untouched and the 1-based
/// stage index is returned.
pub fn rk_step_in_place(
    tableau: &ButcherTableau,
    rhs: &(dyn Fn(&[f64], &mut [f64]) + Send + Sync),
    u: &mut [f64],
    dt: f64,
    ws: &mut Workspace,
) -> Result<(), usize> {
    let s = tableau.stages();
    let n = u.len();
    ws.fit(s, n);
    let a = tableau.a();
    for i in 0..s {
        ws.y.copy_from_slice(u);
        for (j, &aij) in a[i][..i].iter().enumerate() {
            if aij != 0.0 {
                let kj = &ws.k[j];
                for (y, k) in ws.y.iter_mut().zip(kj) {
                    *y += dt * aij * k;
                }
            }
        }
        rhs(&ws.y, &mut ws.k[i]);
        if !ws.k[i].iter().all(|v| v.is_finite()) {
            return Err(i + 1);
        }
    }
    ws.y.copy_from_slice(u);
    for (j, &bj) in tableau.b().iter().enumerate() {
        if bj != 0.0 {
            for (y, k) in ws.y.iter_mut().zip(&ws.k[j]) {
                *y += dt * bj * k;
            }
        }
    }
    if !ws.y.iter().all(|v| v.is_finite()) {
        return Err(s + 1);
    }
    u.copy_from_slice(&ws.y);
    Ok(())
}

pub fn rk_step(tableau: &ButcherTableau, rhs: &Rhs, u: &[f64], dt: f64) -> Result<Vec<f64>, IntegrationError> {
    if !(dt > 0.0) {
        return Err(IntegrationError::StepSize(dt));
    }
    let mut out = u.to_vec();
    let mut ws = Workspace::new(tableau.stages(), u.len());
    rk_step_in_place(tableau, rhs.as_ref(), &mut out, dt, &mut ws)
        .map_err(|stage| IntegrationError::NonFinite { step: 1, stage })?;
    Ok(out)
}

/// One step of a method in modified Shu–Osher form.
pub fn shu_osher_step(so: &ShuOsherForm, rhs: &Rhs, u: &[f64], dt: f64) -> Result<Vec<f64>, IntegrationError> {
    if !(dt > 0.0) {
        return Err(IntegrationError::StepSize(dt));
    }
    let s = so.stages();
    let n = u.len();
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(s + 1);
    let mut fs: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..=s {
        let mut y: Vec<f64> = u.iter().map(|x| so.v()[i] * x).collect();
        for j in 0..i.min(s) {
            let (al, be) = (so.alpha()[i][j], so.beta()[i][j]);
            for k in 0..n {
                y[k] += al * ys[j][k] + dt * be * fs[j][k];
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(IntegrationError::NonFinite { step: 1, stage: i + 1 });
        }
        if i < s {
            let mut f = vec![0.0; n];
            rhs(&y, &mut f);
            fs.push(f);
        }
        ys.push(y);
    }
    Ok(ys.pop().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Final,
    Every,
    /// Step indices to keep (0 is the initial state).
    At(Vec<usize>),
}

impl Record {
    fn keeps(&self, step: usize, n: usize) -> bool {
        match self {
            Record::Final => step == n,
            Record::Every => true,
            Record::At(v) => v.contains(&step),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        &self.samples.last().expect("trajectory keeps at least the final state").state
    }

    /// Rows `step, t, component_0, ...`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.samples.first().map_or(0, |s| s.state.len());
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((0..dim).map(|i| format!("component_{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.step.to_string(), s.t.to_string()];
            row.extend(s.state.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn uniform_dt(ivp: &Ivp, n: usize) -> f64 {
    (ivp.tf - ivp.t0) / n as f64
}

/// Steps with `method(step)` for steps `1..=n` at a fixed `dt`, calling
/// `visit(step, state)` after every step.
pub fn drive<'a>(
    method: impl Fn(usize) -> &'a ButcherTableau,
    rhs: &Rhs,
    u0: &[f64],
    dt: f64,
    n: usize,
    mut visit: impl FnMut(usize, &[f64]) -> Result<(), IntegrationError>,
) -> Result<Vec<f64>, IntegrationError> {
    if !(dt > 0.0) {
        return Err(IntegrationError::StepSize(dt));
    }
    let mut u = u0.to_vec();
    let mut ws = Workspace::new(0, u.len());
    for step in 1..=n {
        rk_step_in_place(method(step), rhs.as_ref(), &mut u, dt, &mut ws)
            .map_err(|stage| IntegrationError::NonFinite { step, stage })?;
        visit(step, &u)?;
    }
    Ok(u)
}

pub fn run_single(tableau: &ButcherTableau, ivp: &Ivp, n: usize, record: &Record) -> Result<Trajectory, IntegrationError> {
    if n == 0 {
        return Err(IntegrationError::NoSteps);
    }
    let dt = uniform_dt(ivp, n);
    let mut samples = Vec::new();
    if record.keeps(0, n) {
        samples.push(Sample { step: 0, t: ivp.t0, state: ivp.u0.clone() });
    }
    drive(|_| tableau, &ivp.rhs, &ivp.u0, dt, n, |step, u| {
        if record.keeps(step, n) {
            samples.push(Sample { step, t: ivp.t0 + step as f64 * dt, state: u.to_vec() });
        }
        Ok(())
    })?;
    Ok(Trajectory { dt, samples })
}

/// Main method `m` with its starting method `r` and stopping method `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeScheme {
    pub r: ButcherTableau,
    pub m: ButcherTableau,
    pub t: ButcherTableau,
    pub q: u32,
    /// SSP coefficient of the main method.
    pub c: f64,
    /// Largest deviation of `r` and `t` from their targets.
    pub residual: f64,
}

impl CompositeScheme {
    /// Checks that `r` and `t` are valid starting and stopping methods for
    /// `m` at effective order `spec.q()`. The free perturbation weights of
    /// order `q` are read off `r`, then every target is verified.
    pub fn new(
        r: ButcherTableau,
        m: ButcherTableau,
        t: ButcherTableau,
        spec: EffectiveOrderSpec,
    ) -> Result<Self, IntegrationError> {
        let residual = start_stop_residual(&r, &m, &t, spec)?;
        if residual > SCHEME_TOL {
            return Err(IntegrationError::SchemeMismatch { residual });
        }
        let c = ssp_coefficient(&m, DEFAULT_BISECTION_TOL).coefficient;
        Ok(Self { r, m, t, q: spec.q(), c, residual })
    }

    /// A method of classical order `q` used as its own starting and
    /// stopping method.
    pub fn classical(m: ButcherTableau, q: u32) -> Result<Self, IntegrationError> {
        let spec = EffectiveOrderSpec::new(q, 2)?;
        Self::new(m.clone(), m.clone(), m, spec)
    }

    pub fn stages(&self) -> usize {
        self.m.stages()
    }

    fn method(&self, step: usize, n: usize) -> &ButcherTableau {
        if step == 1 {
            &self.r
        } else if step == n {
            &self.t
        } else {
            &self.m
        }
    }
}

/// Largest absolute deviation of the weights of `r` and `t` from the
/// starting and stopping targets of `m`.
pub fn start_stop_residual(
    r: &ButcherTableau,
    m: &ButcherTableau,
    t: &ButcherTableau,
    spec: EffectiveOrderSpec,
) -> Result<f64, OrderError> {
    let alpha = elementary_weights(m);
    let beta = beta_weights(&alpha, spec, 1e-9)?;
    let free = beta.free_indices();
    let zero = beta.with_free(&vec![0.0; free.len()])?;
    let (rho0, _) = rt_targets(&alpha, &zero)?;
    let wr = elementary_weights(r);
    // rho(t) = beta(t) + (terms in lower-order beta), so the free entries
    // follow from the weights of r directly.
    let values: Vec<f64> = free.iter().map(|&i| wr[i] - rho0[i]).collect();
    let (rho, tau) = rt_targets(&alpha, &beta.with_free(&values)?)?;
    let wt = elementary_weights(t);
    let n = trees_up_to(spec.q());
    let mut dev: Vec<f64> = (1..=n).map(|i| wr[i] - rho[i]).collect();
    dev.extend((1..=n).map(|i| wt[i] - tau[i]));
    Ok(max_abs(&dev))
}

/// `n` uniform steps: one with `r`, `n - 2` with `m`, one with `t`.
/// Observed interior steps `k` are obtained by finishing a copy of the state
/// after step `k - 1` with the stopping method, leaving the run unchanged.
pub fn run_composite(
    scheme: &CompositeScheme,
    ivp: &Ivp,
    n: usize,
    observe_at: Option<&[usize]>,
) -> Result<Trajectory, IntegrationError> {
    if n < 3 {
        return Err(IntegrationError::TooFewSteps(n));
    }
    let observe = observe_at.unwrap_or(&[]);
    if let Some(&bad) = observe.iter().find(|&&k| k == 1 || k > n) {
        return Err(IntegrationError::Observation { step: bad, n });
    }
    let dt = uniform_dt(ivp, n);
    let mut samples = Vec::new();
    if observe.contains(&0) {
        samples.push(Sample { step: 0, t: ivp.t0, state: ivp.u0.clone() });
    }
    let mut ws = Workspace::new(scheme.t.stages(), ivp.u0.len());
    let rhs = ivp.rhs.clone();
    drive(|k| scheme.method(k, n), &ivp.rhs, &ivp.u0, dt, n, |step, u| {
        let target = step + 1;
        if target < n && observe.contains(&target) {
            let mut copy = u.to_vec();
            rk_step_in_place(&scheme.t, rhs.as_ref(), &mut copy, dt, &mut ws)
                .map_err(|stage| IntegrationError::NonFinite { step: target, stage })?;
            samples.push(Sample { step: target, t: ivp.t0 + target as f64 * dt, state: copy });
        }
        if step == n {
            samples.push(Sample { step, t: ivp.t0 + n as f64 * dt, state: u.to_vec() });
        }
        Ok(())
    })?;
    Ok(Trajectory { dt, samples })
}

/// Least-squares slope of `log(error)` against `log(dt)`.
pub fn loglog_slope(dts: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        dts.iter().zip(errors).filter(|(_, e)| **e > 0.0).map(|(d, e)| (d.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
