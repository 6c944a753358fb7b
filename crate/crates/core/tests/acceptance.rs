//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use essprk::experiments::{
    max_tvd_sigma, run_tvd, vdp_convergence, vdp_convergence_single, BurgersGrid, Profile, SIGMA_TOL,
};
use essprk::integrator::{rk_step, shu_osher_step, Rhs};
use essprk::methods::{catalog, family_n2p1, lookup, Branch};
use essprk::optimizer::{optimize_main, SearchConfig, SearchError};
use essprk::order_conditions::{
    beta_substitution_residuals, beta_weights, classical_order, effective_order, effective_order_residuals,
    elementary_weights, max_abs, order5_barrier_witness, EffectiveOrderSpec, DEFAULT_ORDER_TOL,
};
use essprk::ssp::{ssp_coefficient, DEFAULT_BISECTION_TOL};
use essprk::tableau::{ButcherTableau, ShuOsherForm};

const CATALOG_TOL: f64 = 0.01;
const FAMILY_COEFFICIENT_TOL: f64 = 1e-6;
const FAMILY_RESIDUAL_TOL: f64 = 1e-10;
const BARRIER_SAMPLES: usize = 1000;
const OPTIMUM_TOL: f64 = 1e-3;
const OPTIMUM_442_TOL: f64 = 0.01;
const INFEASIBLE_TOL: f64 = 1e-6;
const SLOPE3_TOL: f64 = 0.2;
const SLOPE4_TOL: f64 = 0.25;
const MAIN_ONLY_SLOPE_MAX: f64 = 2.5;
const SIGMA_TABLE_TOL: f64 = 0.05;
const SQUARE_WAVE_TF: f64 = 0.6;
const GRID_POINTS: usize = 200;
const BOUND_SLACK: f64 = 1e-6;
/// Half a unit in the last place of a two-decimal tabulated value.
const ROUNDING: f64 = 0.005;
const EQUIVALENCE_CASES: usize = 100;
const EQUIVALENCE_TOL: f64 = 1e-12;
const SUBSTITUTION_TOL: f64 = 1e-12;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn spec(q: u32, p: u32) -> EffectiveOrderSpec {
    EffectiveOrderSpec::new(q, p).unwrap()
}

fn catalog_coefficients() -> Verdict {
    let mut bad = Vec::new();
    let mut seen = Vec::new();
    for e in catalog() {
        let eff = effective_order(&e.main, DEFAULT_ORDER_TOL);
        let cls = classical_order(&e.main, DEFAULT_ORDER_TOL).order;
        let c = ssp_coefficient(&e.main, DEFAULT_BISECTION_TOL).coefficient;
        seen.push(format!("{} C={c:.4}", e.label));
        if eff != e.q || cls != e.p {
            bad.push(format!("{}: orders ({eff},{cls}) vs ({},{})", e.label, e.q, e.p));
        }
        if (c - e.ssp_coefficient).abs() > CATALOG_TOL {
            bad.push(format!("{}: C={c:.4} vs published {}", e.label, e.ssp_coefficient));
        }
    }
    if bad.is_empty() {
        verdict(true, seen.join(", "))
    } else {
        verdict(false, bad.join("; "))
    }
}

fn family_bound() -> Verdict {
    let mut bad = Vec::new();
    let mut seen = Vec::new();
    for n in [3usize, 4] {
        for branch in [Branch::Plus, Branch::Minus] {
            let t = family_n2p1(n, branch).unwrap().to_butcher().unwrap();
            let c = ssp_coefficient(&t, DEFAULT_BISECTION_TOL).coefficient;
            let res = max_abs(&effective_order_residuals(&elementary_weights(&t), spec(4, 2)));
            seen.push(format!("n={n} {branch:?} C={c:.8} residual={res:.1e}"));
            if (c - (n * n - n) as f64).abs() > FAMILY_COEFFICIENT_TOL || res > FAMILY_RESIDUAL_TOL {
                bad.push(seen.last().unwrap().clone());
            }
        }
    }
    verdict(bad.is_empty(), if bad.is_empty() { seen.join(", ") } else { bad.join("; ") })
}

/// At least two stages: a one-stage method has `v = [0]`.
fn random_positive_tableau(rng: &mut ChaCha8Rng) -> ButcherTableau {
    let s = rng.gen_range(2..=6);
    let lower: Vec<Vec<f64>> = (1..s).map(|i| (0..i).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let raw: Vec<f64> = (0..s).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ButcherTableau::from_lower(&lower, raw.iter().map(|x| x / total).collect()).unwrap()
}

fn barrier() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_order = 0;
    let mut failures = 0;
    let positive_catalog: Vec<ButcherTableau> =
        catalog().iter().map(|e| e.main.clone()).filter(|t| t.b().iter().all(|&x| x > 0.0)).collect();
    let samples = (0..BARRIER_SAMPLES).map(|_| random_positive_tableau(&mut rng)).collect::<Vec<_>>();
    for t in samples.iter().chain(&positive_catalog) {
        let q = effective_order(t, DEFAULT_ORDER_TOL);
        max_order = max_order.max(q);
        let w = order5_barrier_witness(t, DEFAULT_ORDER_TOL).unwrap();
        let nonconstant = w.v.iter().any(|x| (x - w.v[0]).abs() > 0.0);
        if q >= 5 || !(w.jensen_gap != 0.0 || nonconstant) {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!(
            "{BARRIER_SAMPLES} random and {} catalog tableaux, highest effective order {max_order}, {failures} violations",
            positive_catalog.len()
        ),
    )
}

/// Coefficient found by the search; an infeasible search reports zero.
fn searched(stages: usize, q: u32, p: u32) -> f64 {
    match optimize_main(stages, spec(q, p), &SearchConfig::default()) {
        Ok(out) => out.ssp.coefficient,
        Err(SearchError::Infeasible { coefficient, .. }) => coefficient,
        Err(e) => panic!("search ({stages},{q},{p}) failed: {e}"),
    }
}

fn optimizer_recovery() -> (Verdict, Vec<(usize, u32, f64)>) {
    let cases: [(usize, u32, u32, f64, f64); 4] = [
        (3, 3, 2, 1.0, OPTIMUM_TOL),
        (4, 3, 2, 2.0, OPTIMUM_TOL),
        (4, 4, 2, 0.88, OPTIMUM_442_TOL),
        (4, 5, 2, 0.0, INFEASIBLE_TOL),
    ];
    let found: Vec<f64> = cases.par_iter().map(|&(s, q, p, _, _)| searched(s, q, p)).collect();
    let mut pass = true;
    let mut seen = Vec::new();
    for (&(s, q, p, target, tol), &c) in cases.iter().zip(&found) {
        let ok = if target == 0.0 { c <= tol } else { (c - target).abs() <= tol };
        pass &= ok;
        seen.push(format!("({s},{q},{p}) C={c:.5}{}", if ok { "" } else { " MISS" }));
    }
    let computed = cases.iter().zip(&found).map(|(&(s, q, _, _, _), &c)| (s, q, c)).collect();
    (verdict(pass, seen.join(", ")), computed)
}

fn convergence_slopes() -> Verdict {
    let runs: Vec<(&str, f64, f64)> = vec![
        ("ESSPRK(3,3,2)", 3.0, SLOPE3_TOL),
        ("ESSPRK(4,3,2)", 3.0, SLOPE3_TOL),
        ("ESSPRK(4,4,2)", 4.0, SLOPE4_TOL),
        ("ESSPRK(5,4,2)", 4.0, SLOPE4_TOL),
    ];
    let slopes: Vec<Option<f64>> = runs
        .par_iter()
        .map(|(label, _, _)| vdp_convergence(&lookup(label).unwrap().scheme().unwrap()).unwrap().slope)
        .collect();
    let main_only = vdp_convergence_single(&lookup("ESSPRK(4,4,2)").unwrap().main).unwrap().slope;
    let mut pass = true;
    let mut seen = Vec::new();
    for ((label, target, tol), slope) in runs.iter().zip(&slopes) {
        let ok = slope.is_some_and(|k| (k - target).abs() <= *tol);
        pass &= ok;
        seen.push(format!("{label} slope={:.3}", slope.unwrap_or(f64::NAN)));
    }
    let ok = main_only.is_some_and(|k| k <= MAIN_ONLY_SLOPE_MAX);
    pass &= ok;
    seen.push(format!("ESSPRK(4,4,2) main only slope={:.3}", main_only.unwrap_or(f64::NAN)));
    verdict(pass, seen.join(", "))
}

fn tvd_thresholds() -> Verdict {
    let grid = BurgersGrid::new(GRID_POINTS, Profile::SquareWave).unwrap();
    let table = [
        ("ESSPRK(3,3,2)", 1.04),
        ("ESSPRK(4,3,2)", 2.00),
        ("ESSPRK(4,4,2)", 1.07),
        ("ESSPRK(5,4,2)", 1.98),
        ("ESSPRK(4,4,3)", 1.05),
    ];
    let rows: Vec<(f64, bool, f64)> = table
        .par_iter()
        .map(|(label, _)| {
            let scheme = lookup(label).unwrap().scheme().unwrap();
            let sigma = max_tvd_sigma(&scheme, &grid, SQUARE_WAVE_TF, SIGMA_TOL).unwrap();
            let safe = run_tvd(&scheme, &grid, 0.99 * scheme.c, SQUARE_WAVE_TF).unwrap().monotone;
            (sigma, safe, scheme.c)
        })
        .collect();
    let mut pass = true;
    let mut seen = Vec::new();
    for ((label, published), (sigma, safe, c)) in table.iter().zip(&rows) {
        let ok = (sigma - published).abs() <= SIGMA_TABLE_TOL && *safe;
        pass &= ok;
        seen.push(format!(
            "{label} sigma={sigma:.3} (table {published:.2}), TVD at 0.99C={:.3}: {safe}",
            0.99 * c
        ));
    }
    verdict(pass, seen.join(", "))
}

/// `s * C_lin(s, q)` where a value is tabulated. Exact values are used where
/// they are known in closed form, otherwise the two-decimal effective value
/// plus rounding.
fn linear_bound(s: usize, q: u32) -> Option<f64> {
    let exact = match (s, q) {
        (3, 3) => Some(1.0),
        (4, 3) => Some(2.0),
        (4, 4) => Some(1.0),
        (5, 4) => Some(2.0),
        _ => None,
    };
    if exact.is_some() {
        return exact;
    }
    let row3 = [0.53, 0.59, 0.61, 0.64, 0.67, 0.68, 0.69];
    let row4 = [0.44, 0.50, 0.54, 0.57, 0.60, 0.62];
    let eff = match q {
        3 if (5..=11).contains(&s) => row3[s - 5],
        4 if (6..=11).contains(&s) => row4[s - 6],
        _ => return None,
    };
    Some(s as f64 * (eff + ROUNDING))
}

fn bound_chain(searched: &[(usize, u32, f64)]) -> Verdict {
    let mut computed: Vec<(String, usize, u32, f64)> = catalog()
        .iter()
        .map(|e| (e.label.clone(), e.stages(), e.q, ssp_coefficient(&e.main, DEFAULT_BISECTION_TOL).coefficient))
        .collect();
    computed.extend(searched.iter().map(|&(s, q, c)| (format!("search({s},{q})"), s, q, c)));
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut untabulated = Vec::new();
    for (label, s, q, c) in &computed {
        if *q >= 5 {
            if *c > BOUND_SLACK {
                bad.push(format!("{label}: C={c} with q={q}"));
            }
            checked += 1;
            continue;
        }
        match linear_bound(*s, *q) {
            Some(bound) => {
                checked += 1;
                if *c > bound + BOUND_SLACK {
                    bad.push(format!("{label}: C={c:.6} > {bound:.6}"));
                }
            }
            None => untabulated.push(label.clone()),
        }
    }
    let mut detail = format!("{checked} coefficients within their linear bound");
    if !untabulated.is_empty() {
        detail.push_str(&format!(", no tabulated bound for {}", untabulated.join(", ")));
    }
    if !bad.is_empty() {
        detail = bad.join("; ");
    }
    verdict(bad.is_empty(), detail)
}

fn random_shu_osher(rng: &mut ChaCha8Rng) -> ShuOsherForm {
    let s = rng.gen_range(1..=6);
    let mut v = Vec::with_capacity(s + 1);
    let mut alpha = Vec::with_capacity(s + 1);
    let mut beta = Vec::with_capacity(s + 1);
    for i in 0..=s {
        let weights: Vec<f64> = (0..=i).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut row = vec![0.0; s];
        for j in 0..i {
            row[j] = weights[j + 1] / total;
        }
        v.push(1.0 - row.iter().sum::<f64>());
        alpha.push(row);
        beta.push((0..s).map(|j| if j < i { rng.gen_range(0.0..1.0) } else { 0.0 }).collect());
    }
    ShuOsherForm::new(v, alpha, beta).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let rhs: Rhs = Arc::new(|u: &[f64], f: &mut [f64]| {
        f[0] = u[1] * u[0].cos();
        f[1] = -u[0].sin() + 0.1 * u[1] * u[1];
    });
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_step: f64 = 0.0;
    for _ in 0..EQUIVALENCE_CASES {
        let so = random_shu_osher(&mut rng);
        let bt = so.to_butcher().unwrap();
        let u = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let dt = rng.gen_range(0.05..0.5);
        let a = shu_osher_step(&so, &rhs, &u, dt).unwrap();
        let b = rk_step(&bt, &rhs, &u, dt).unwrap();
        worst_step = worst_step.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let mut worst_sub: f64 = 0.0;
    for e in catalog() {
        let alpha = elementary_weights(&e.main);
        let s = spec(e.q, e.p.min(e.q - 1));
        let beta = beta_weights(&alpha, s, 1e-9).unwrap();
        let filled = beta.with_free(&vec![0.0; beta.free_indices().len()]).unwrap();
        let res = beta_substitution_residuals(&alpha, &filled.resolved().unwrap(), e.q);
        worst_sub = worst_sub.max(max_abs(&res));
    }
    verdict(
        worst_step <= EQUIVALENCE_TOL && worst_sub <= SUBSTITUTION_TOL,
        format!(
            "{EQUIVALENCE_CASES} random steps, worst difference {worst_step:.2e}; catalog substitution worst {worst_sub:.2e}"
        ),
    )
}

fn main() {
    let (recovery, searched) = optimizer_recovery();
    let verdicts = [
        ("1 catalog verification", catalog_coefficients()),
        ("2 family bound", family_bound()),
        ("3 barrier property", barrier()),
        ("4 optimizer recovery", recovery),
        ("5 convergence slopes", convergence_slopes()),
        ("6 TVD thresholds", tvd_thresholds()),
        ("7 bound chain", bound_chain(&searched)),
        ("8 oracle equivalence", oracle_equivalence()),
    ];
    let mut failed = 0;
    for (name, v) in &verdicts {
        println!("criterion {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
