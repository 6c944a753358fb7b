//! Elementary weights over the seventeen rooted trees of order at most five,
//! classical and effective order, recovery of the starting-method weights,
//! and the target weights for the SSP starting and stopping methods.
//!
//! Trees are indexed `t0..=t17` in the fixed order below (`t0` is the empty
//! tree). Writing `C = diag(c)` and powers of vectors componentwise:
//!
//! | i | weight      | i  | weight       | i  | weight      |
//! |---|-------------|----|--------------|----|-------------|
//! | 1 | `b'e`       | 7  | `b'Ac^2`     | 13 | `b'(Ac)^2`  |
//! | 2 | `b'c`       | 8  | `b'A^2c`     | 14 | `b'Ac^3`    |
//! | 3 | `b'c^2`     | 9  | `b'c^4`      | 15 | `b'ACAc`    |
//! | 4 | `b'Ac`      | 10 | `b'C^2Ac`    | 16 | `b'A^2c^2`  |
//! | 5 | `b'c^3`     | 11 | `b'CAc^2`    | 17 | `b'A^3c`    |
//! | 6 | `b'CAc`     | 12 | `b'CA^2c`    |    |             |

use thiserror::Error;

use crate::tableau::ButcherTableau;

pub const NUM_TREES: usize = 18;

/// Tree densities `gamma(t_i)`; index 0 is a sentinel for the empty tree.
pub const GAMMA: [u32; NUM_TREES] = [0, 1, 2, 3, 6, 4, 8, 12, 24, 5, 10, 15, 30, 20, 20, 40, 60, 120];

/// Number of vertices of each tree.
pub const TREE_ORDER: [u32; NUM_TREES] = [0, 1, 2, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 5, 5, 5, 5, 5];

/// The chain trees, whose conditions are exactly the linear-problem ones.
pub const TALL_TREES: [usize; 5] = [1, 2, 4, 8, 17];

pub const DEFAULT_ORDER_TOL: f64 = 1e-10;

/// Number of trees with at most `order` vertices (excluding the empty tree).
pub fn trees_up_to(order: u32) -> usize {
    TREE_ORDER.iter().skip(1).filter(|&&r| r <= order).count()
}

/// Exact-flow weight `E(t_i) = 1/gamma(t_i)`.
pub fn exact_weight(i: usize) -> f64 {
    1.0 / GAMMA[i] as f64
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("unsupported (effective, classical) order pair ({q}, {p})")]
    InvalidSpec { q: u32, p: u32 },
    #[error("main method does not satisfy effective order conditions (max residual {max_residual:e})")]
    NotEffectiveOrder { max_residual: f64 },
    #[error("beta_{index} is free and must be supplied before evaluating targets")]
    FreeBeta { index: usize },
    #[error("expected {expected} free beta values, got {found}")]
    FreeCount { expected: usize, found: usize },
    #[error("barrier applies only to positive weights (b_{index} = {value})")]
    NonPositiveWeight { index: usize, value: f64 },
}

/// Elementary weights `alpha(t_0..t_17)` with `alpha[0] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaWeights(pub [f64; NUM_TREES]);

impl AlphaWeights {
    pub fn exact() -> Self {
        let mut a = [1.0; NUM_TREES];
        for (i, x) in a.iter_mut().enumerate().skip(1) {
            *x = exact_weight(i);
        }
        Self(a)
    }
}

impl std::ops::Index<usize> for AlphaWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Effective order `q` with classical order `p` of a main method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EffectiveOrderSpec {
    q: u32,
    p: u32,
}

impl EffectiveOrderSpec {
    pub const ALL: [(u32, u32); 6] = [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)];

    pub fn new(q: u32, p: u32) -> Result<Self, OrderError> {
        if Self::ALL.contains(&(q, p)) {
            Ok(Self { q, p })
        } else {
            Err(OrderError::InvalidSpec { q, p })
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn p(&self) -> u32 {
        self.p
    }
}

impl std::fmt::Display for EffectiveOrderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(q={}, p={})", self.q, self.p)
    }
}

/// A starting-method weight is either determined by the main method or left
/// free for the start/stop search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSlot {
    Fixed(f64),
    Free,
}

/// Starting-method weights `beta_1..beta_K` (stored 0-based, `slots[0]` is
/// `beta_1 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaWeights {
    slots: Vec<BetaSlot>,
}

impl BetaWeights {
    /// Fully known weights `beta_1..beta_K`; `values[0]` must be (numerically) zero.
    pub fn known(values: &[f64]) -> Self {
        debug_assert!(values.first().is_none_or(|b| b.abs() <= 1e-12));
        Self {
            slots: values.iter().map(|&x| BetaSlot::Fixed(x)).collect(),
        }
    }

    pub fn slots(&self) -> &[BetaSlot] {
        &self.slots
    }

    /// Value of `beta_i` (1-based), `None` if free or out of range.
    pub fn get(&self, i: usize) -> Option<f64> {
        match self.slots.get(i.checked_sub(1)?) {
            Some(BetaSlot::Fixed(x)) => Some(*x),
            _ => None,
        }
    }

    /// 1-based indices of the free entries.
    pub fn free_indices(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, BetaSlot::Free))
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Fills the free entries in order.
    pub fn with_free(&self, values: &[f64]) -> Result<Self, OrderError> {
        let free = self.free_indices();
        if free.len() != values.len() {
            return Err(OrderError::FreeCount {
                expected: free.len(),
                found: values.len(),
            });
        }
        let mut slots = self.slots.clone();
        for (&i, &x) in free.iter().zip(values) {
            slots[i - 1] = BetaSlot::Fixed(x);
        }
        Ok(Self { slots })
    }

    /// `[0, beta_1, ..., beta_K]`, or the first free index.
    pub fn resolved(&self) -> Result<Vec<f64>, OrderError> {
        let mut out = vec![0.0];
        for (i, s) in self.slots.iter().enumerate() {
            match s {
                BetaSlot::Fixed(x) => out.push(*x),
                BetaSlot::Free => return Err(OrderError::FreeBeta { index: i + 1 }),
            }
        }
        Ok(out)
    }
}

pub fn elementary_weights(tableau: &ButcherTableau) -> AlphaWeights {
    let a = tableau.a();
    let b = tableau.b();
    let c = tableau.c();
    let s = b.len();

    let mat_vec = |v: &[f64]| -> Vec<f64> {
        (0..s).map(|i| (0..i).map(|j| a[i][j] * v[j]).sum()).collect()
    };
    let hadamard = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let dot = |v: &[f64]| -> f64 { b.iter().zip(v).map(|(p, q)| p * q).sum() };

    let e = vec![1.0; s];
    let c2 = hadamard(c, c);
    let c3 = hadamard(&c2, c);
    let c4 = hadamard(&c3, c);
    let ac = mat_vec(c);
    let ac2 = mat_vec(&c2);
    let ac3 = mat_vec(&c3);
    let a2c = mat_vec(&ac);
    let a2c2 = mat_vec(&ac2);
    let a3c = mat_vec(&a2c);
    let cac = hadamard(c, &ac);
    let acac = mat_vec(&cac);

    let mut w = [0.0; NUM_TREES];
    w[0] = 1.0;
    w[1] = dot(&e);
    w[2] = dot(c);
    w[3] = dot(&c2);
    w[4] = dot(&ac);
    w[5] = dot(&c3);
    w[6] = dot(&cac);
    w[7] = dot(&ac2);
    w[8] = dot(&a2c);
    w[9] = dot(&c4);
    w[10] = dot(&hadamard(&c2, &ac));
    w[11] = dot(&hadamard(c, &ac2));
    w[12] = dot(&hadamard(c, &a2c));
    w[13] = dot(&hadamard(&ac, &ac));
    w[14] = dot(&ac3);
    w[15] = dot(&acac);
    w[16] = dot(&a2c2);
    w[17] = dot(&a3c);
    AlphaWeights(w)
}

/// Classical order with a flag set when the cap of five is reached (the
/// true order may be higher).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassicalOrder {
    pub order: u32,
    pub at_least: bool,
}

pub fn classical_order_of(alpha: &AlphaWeights, tol: f64) -> ClassicalOrder {
    let mut order = 0;
    for p in 1..=5 {
        let ok = (1..NUM_TREES)
            .filter(|&i| TREE_ORDER[i] == p)
            .all(|i| (alpha[i] - exact_weight(i)).abs() <= tol);
        if !ok {
            break;
        }
        order = p;
    }
    ClassicalOrder {
        order,
        at_least: order == 5,
    }
}

pub fn classical_order(tableau: &ButcherTableau, tol: f64) -> ClassicalOrder {
    classical_order_of(&elementary_weights(tableau), tol)
}

/// `beta_2` eliminated through the effective order three relation.
fn beta2_of(alpha: &AlphaWeights) -> f64 {
    -1.0 / 6.0 + 0.5 * alpha[3]
}

/// Left-minus-right values of every main-method condition for `(q, p)`.
pub fn effective_order_residuals(alpha: &AlphaWeights, spec: EffectiveOrderSpec) -> Vec<f64> {
    let al = alpha;
    let mut r = vec![al[1] - 1.0, al[2] - 0.5];
    if spec.p >= 3 {
        r.push(al[3] - 1.0 / 3.0);
    }
    r.push(al[4] - 1.0 / 6.0);
    if spec.q >= 4 {
        match spec.p {
            2 => r.push(0.25 - al[3] + al[5] - 2.0 * al[6] + al[7]),
            3 => r.push(1.0 / 12.0 - al[5] + 2.0 * al[6] - al[7]),
            _ => {
                r.push(al[5] - 0.25);
                r.push(al[6] - 0.125);
                r.push(al[7] - 1.0 / 12.0);
            }
        }
        r.push(al[8] - 1.0 / 24.0);
    }
    if spec.q == 5 {
        r.push(al[17] - 1.0 / 120.0);
        match spec.p {
            2 => {
                let b2 = beta2_of(al);
                let b22 = b2 * b2;
                r.push(0.25 * al[9] - al[10] + al[13] - b22);
                r.push(
                    0.3 - 1.5 * al[3] + al[5] + 0.5 * al[9] - 3.0 * al[10] + 3.0 * al[11] - al[14] - 6.0 * b22,
                );
                r.push(
                    1.0 / 15.0 - 0.5 * al[3] + al[6] + 0.5 * al[9] - 2.0 * al[10] + al[11] + al[12] - al[15]
                        - 2.0 * b22,
                );
                r.push(19.0 / 60.0 - al[3] + al[5] - 2.0 * al[6] + al[11] - 2.0 * al[12] + al[16] - 4.0 * b22);
            }
            3 => {
                r.push(0.25 * al[9] - al[10] + al[13]);
                r.push(0.2 - al[5] - 0.5 * al[9] + 3.0 * al[10] - 3.0 * al[11] + al[14]);
                r.push(0.1 - al[6] - 0.5 * al[9] + 2.0 * al[10] - al[11] - al[12] + al[15]);
                r.push(1.0 / 60.0 - al[5] + 2.0 * al[6] - al[11] + 2.0 * al[12] - al[16]);
            }
            _ => {
                r.push(0.25 * al[9] - al[10] + al[13]);
                r.push(0.05 + 0.5 * al[9] - 3.0 * al[10] + 3.0 * al[11] - al[14]);
                r.push(0.025 + 0.5 * al[9] - 2.0 * al[10] + al[11] + al[12] - al[15]);
                r.push(1.0 / 60.0 - al[11] + 2.0 * al[12] - al[16]);
            }
        }
    }
    r
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Starting-method weights implied by a main method with effective order
/// `q` and classical order `p`. Weights of order `q` itself are left
/// [`BetaSlot::Free`] for `q <= 4`.
pub fn beta_weights(alpha: &AlphaWeights, spec: EffectiveOrderSpec, tol: f64) -> Result<BetaWeights, OrderError> {
    let max_residual = max_abs(&effective_order_residuals(alpha, spec));
    if max_residual > tol {
        return Err(OrderError::NotEffectiveOrder { max_residual });
    }
    let al = alpha;
    let b2 = if spec.p >= 3 { 0.0 } else { beta2_of(al) };
    let mut slots = vec![BetaSlot::Fixed(0.0), BetaSlot::Fixed(b2)];
    match spec.q {
        3 => slots.extend([BetaSlot::Free, BetaSlot::Free]),
        4 => {
            let (b3, b4) = fourth_order_betas(al, spec.p);
            slots.extend([BetaSlot::Fixed(b3), BetaSlot::Fixed(b4)]);
            slots.extend([BetaSlot::Free; 4]);
        }
        _ => {
            let (b3, b4) = fourth_order_betas(al, spec.p);
            let b22 = b2 * b2;
            let (b5, b6, b7, b8) = match spec.p {
                2 => (
                    -1.0 / 120.0 + 0.25 * al[3] - 0.5 * al[5] + 0.25 * al[9],
                    7.0 / 720.0 + b22 + al[3] / 12.0 - 0.5 * al[6] - 0.125 * al[9] + 0.5 * al[10],
                    8.0 / 45.0 - 2.0 * b22 - 7.0 / 12.0 * al[3] + 0.5 * al[5] - al[6] + 0.25 * al[9] - al[10]
                        + al[11],
                    -1.0 / 120.0 + b22 + 0.125 * al[9] - 0.5 * al[10] + al[12],
                ),
                3 => (
                    3.0 / 40.0 - 0.5 * al[5] + 0.25 * al[9],
                    3.0 / 80.0 - 0.5 * al[6] - 0.125 * al[9] + 0.5 * al[10],
                    -1.0 / 60.0 + 0.5 * al[5] - al[6] + 0.25 * al[9] - al[10] + al[11],
                    -1.0 / 120.0 + 0.125 * al[9] - 0.5 * al[10] + al[12],
                ),
                _ => (
                    -0.05 + 0.25 * al[9],
                    -0.025 - 0.125 * al[9] + 0.5 * al[10],
                    -1.0 / 60.0 + 0.25 * al[9] - al[10] + al[11],
                    -1.0 / 120.0 + 0.125 * al[9] - 0.5 * al[10] + al[12],
                ),
            };
            slots.extend([b3, b4, b5, b6, b7, b8].map(BetaSlot::Fixed));
        }
    }
    Ok(BetaWeights { slots })
}

fn fourth_order_betas(al: &AlphaWeights, p: u32) -> (f64, f64) {
    match p {
        2 => (
            1.0 / 12.0 - 0.5 * al[3] + al[5] / 3.0,
            -1.0 / 24.0 - al[5] / 3.0 + al[6],
        ),
        3 => (-1.0 / 12.0 + al[5] / 3.0, -1.0 / 24.0 - al[5] / 3.0 + al[6]),
        _ => (0.0, 0.0),
    }
}

/// Main-method weights that the effective order relations predict from a
/// full set of starting weights `[0, beta_1, ..., beta_8]` (with
/// `beta_1 = 0`). Entry `i` is the right-hand side of the relation for
/// `alpha_i`.
pub fn alpha_from_beta(beta: &[f64]) -> [f64; NUM_TREES] {
    let b = |i: usize| beta.get(i).copied().unwrap_or(0.0);
    let b2 = b(2);
    let mut a = [0.0; NUM_TREES];
    a[0] = 1.0;
    a[1] = 1.0;
    a[2] = 0.5;
    a[3] = 1.0 / 3.0 + 2.0 * b2;
    a[4] = 1.0 / 6.0;
    a[5] = 0.25 + 3.0 * b2 + 3.0 * b(3);
    a[6] = 0.125 + b2 + b(3) + b(4);
    a[7] = 1.0 / 12.0 + b2 - b(3) + 2.0 * b(4);
    a[8] = 1.0 / 24.0;
    a[9] = 0.2 + 4.0 * b2 + 6.0 * b(3) + 4.0 * b(5);
    a[10] = 0.1 + 5.0 / 3.0 * b2 - 2.0 * b2 * b2 + 2.5 * b(3) + b(4) + b(5) + 2.0 * b(6);
    a[11] = 1.0 / 15.0 + 4.0 / 3.0 * b2 + 0.5 * b(3) + 2.0 * b(4) + 2.0 * b(6) + b(7);
    a[12] = 1.0 / 30.0 + b2 / 3.0 - 2.0 * b2 * b2 + 0.5 * b(3) + 0.5 * b(4) + b(6) + b(8);
    a[13] = 0.05 + 2.0 / 3.0 * b2 - b2 * b2 + b(3) + b(4) + 2.0 * b(6);
    a[14] = 0.05 + b2 + 3.0 * b(4) - b(5) + 3.0 * b(7);
    a[15] = 0.025 + b2 / 3.0 + 1.5 * b(4) - b(6) + b(7) + b(8);
    a[16] = 1.0 / 60.0 + b2 / 3.0 - 0.5 * b(3) + b(4) - b(7) + 2.0 * b(8);
    a[17] = 1.0 / 120.0;
    a
}

/// Residuals `alpha_i - alpha_from_beta(beta)_i` for every tree of order at
/// most `q`.
pub fn beta_substitution_residuals(alpha: &AlphaWeights, beta: &[f64], q: u32) -> Vec<f64> {
    let predicted = alpha_from_beta(beta);
    (1..NUM_TREES)
        .filter(|&i| TREE_ORDER[i] <= q)
        .map(|i| alpha[i] - predicted[i])
        .collect()
}

/// Largest `q <= 5` for which starting weights exist, decided through the
/// eliminated condition sets (classical order two is implied from `q = 3`
/// on, so the `p = 2` rows are the weakest).
pub fn effective_order_of(alpha: &AlphaWeights, tol: f64) -> u32 {
    let ok = |r: &[f64]| max_abs(r) <= tol;
    let al = alpha;
    if (al[1] - 1.0).abs() > tol {
        return 0;
    }
    if (al[2] - 0.5).abs() > tol {
        return 1;
    }
    if (al[4] - 1.0 / 6.0).abs() > tol {
        return 2;
    }
    let spec = |q, p| EffectiveOrderSpec { q, p };
    if !ok(&effective_order_residuals(al, spec(4, 2))) {
        return 3;
    }
    if !ok(&effective_order_residuals(al, spec(5, 2))) {
        return 4;
    }
    5
}

pub fn effective_order(tableau: &ButcherTableau, tol: f64) -> u32 {
    effective_order_of(&elementary_weights(tableau), tol)
}

/// Target weights `rho = beta alpha` (starting method `R`, equivalent to the
/// perturbation followed by the main method) and `tau = alpha beta^{-1}`
/// (stopping method `T`). Both vectors are indexed like the trees, with
/// entry 0 set to 1, and have length `K + 1` where `K` is the number of
/// supplied starting weights (4 or 8).
pub fn rt_targets(alpha: &AlphaWeights, beta: &BetaWeights) -> Result<(Vec<f64>, Vec<f64>), OrderError> {
    let bv = beta.resolved()?;
    let n = bv.len();
    let b = |i: usize| bv.get(i).copied().unwrap_or(0.0);
    let a = alpha;
    let a1 = a[1];
    let rho_full = [
        1.0,
        a1,
        a[2] + b(2),
        a[3] + b(3),
        a[4] + a1 * b(2) + b(4),
        a[5] + b(5),
        a[6] + a[2] * b(2) + b(6),
        a[7] + a1 * b(3) + b(7),
        a[8] + a1 * b(4) + a[2] * b(2) + b(8),
    ];
    let tau_full = [
        1.0,
        a1,
        a[2] - b(2),
        a[3] - 2.0 * a1 * b(2) - b(3),
        a[4] - a1 * b(2) - b(4),
        a[5] - 3.0 * a1 * a1 * b(2) - 3.0 * a1 * b(3) - b(5),
        a[6] - (a1 * a1 + a[2] - b(2)) * b(2) - a1 * b(3) - a1 * b(4) - b(6),
        a[7] - 2.0 * a1 * b(4) - a1 * a1 * b(2) - b(7),
        a[8] - a1 * b(4) - a[2] * b(2) + b(2) * b(2) - b(8),
    ];
    Ok((rho_full[..n].to_vec(), tau_full[..n].to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierVerdict {
    /// `v` is not identically zero, so the Jensen equality case is excluded
    /// and effective order five with classical order two is unattainable.
    Certified,
    /// `v = 0` (stage order two); the argument gives no conclusion.
    Inconclusive,
}

/// Data of the positive-weight barrier argument for effective order five.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierWitness {
    /// `v = c^2/2 - Ac`.
    pub v: Vec<f64>,
    pub btv: f64,
    pub btv2: f64,
    /// `(b'v)^2 - b'v^2`, nonpositive for weights summing to one.
    pub jensen_gap: f64,
    pub verdict: BarrierVerdict,
}

pub fn order5_barrier_witness(tableau: &ButcherTableau, tol: f64) -> Result<BarrierWitness, OrderError> {
    let b = tableau.b();
    if let Some((i, &x)) = b.iter().enumerate().find(|(_, &x)| x <= 0.0) {
        return Err(OrderError::NonPositiveWeight { index: i + 1, value: x });
    }
    let a = tableau.a();
    let c = tableau.c();
    let v: Vec<f64> = (0..b.len())
        .map(|i| 0.5 * c[i] * c[i] - (0..i).map(|j| a[i][j] * c[j]).sum::<f64>())
        .collect();
    let btv: f64 = b.iter().zip(&v).map(|(b, v)| b * v).sum();
    let btv2: f64 = b.iter().zip(&v).map(|(b, v)| b * v * v).sum();
    let verdict = if v.iter().all(|x| x.abs() <= tol) {
        BarrierVerdict::Inconclusive
    } else {
        BarrierVerdict::Certified
    };
    Ok(BarrierWitness {
        v,
        btv,
        btv2,
        jensen_gap: btv * btv - btv2,
        verdict,
    })
}
