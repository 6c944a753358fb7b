//! Radius of absolute monotonicity of an explicit Runge–Kutta method, which
//! for irreducible methods is the SSP coefficient.
//!
//! A method is absolutely monotonic at radius `r` when
//! `K (I + rA)^{-1} >= 0` and `e - r K (I + rA)^{-1} e >= 0` componentwise,
//! with `K = [A; b^T]`.

use serde::Serialize;

use crate::tableau::ButcherTableau;

pub const DEFAULT_BISECTION_TOL: f64 = 1e-10;
pub const DEFAULT_ENTRY_TOL: f64 = 1e-12;

/// Which block of the absolute monotonicity conditions an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Entry `(row, col)` of `K (I + rA)^{-1}`.
    Matrix { row: usize, col: usize },
    /// Entry `row` of `e - r K (I + rA)^{-1} e`.
    Vector { row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub radius: f64,
    pub feasible: bool,
    /// Most negative entry over both blocks (0-based indices).
    pub min_entry: f64,
    pub min_at: Block,
}

/// `P = K (I + rA)^{-1}`, computed row by row with a back substitution on
/// the unit upper triangular `(I + rA)^T`.
pub fn shu_osher_matrix(tableau: &ButcherTableau, r: f64) -> Vec<Vec<f64>> {
    let a = tableau.a();
    let s = tableau.stages();
    tableau
        .k_matrix()
        .rows
        .iter()
        .map(|k| {
            let mut m = vec![0.0; s];
            for j in (0..s).rev() {
                let tail: f64 = (j + 1..s).map(|l| m[l] * a[l][j]).sum();
                m[j] = k[j] - r * tail;
            }
            m
        })
        .collect()
}

pub fn abs_monotonic(tableau: &ButcherTableau, r: f64, tol: f64) -> FeasibilityReport {
    let p = shu_osher_matrix(tableau, r);
    let mut min_entry = f64::INFINITY;
    let mut min_at = Block::Vector { row: 0 };
    for (i, row) in p.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x < min_entry || x.is_nan() {
                min_entry = x;
                min_at = Block::Matrix { row: i, col: j };
            }
        }
        let v = 1.0 - r * row.iter().sum::<f64>();
        if v < min_entry || v.is_nan() {
            min_entry = v;
            min_at = Block::Vector { row: i };
        }
    }
    FeasibilityReport {
        radius: r,
        feasible: min_entry >= -tol,
        min_entry,
        min_at,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SSPResult {
    pub coefficient: f64,
    pub effective_coefficient: f64,
    pub bracket: (f64, f64),
    /// Feasibility data at the lower end of the bracket.
    pub certificate: FeasibilityReport,
}

/// Largest feasible radius by bisection on `[0, 2s]`, to within `tol`.
pub fn ssp_coefficient(tableau: &ButcherTableau, tol: f64) -> SSPResult {
    ssp_coefficient_with(tableau, tol, DEFAULT_ENTRY_TOL)
}

pub fn ssp_coefficient_with(tableau: &ButcherTableau, tol: f64, entry_tol: f64) -> SSPResult {
    let s = tableau.stages() as f64;
    let finish = |lo: f64, hi: f64, cert: FeasibilityReport| SSPResult {
        coefficient: lo,
        effective_coefficient: lo / s,
        bracket: (lo, hi),
        certificate: cert,
    };
    let at_zero = abs_monotonic(tableau, 0.0, entry_tol);
    if !at_zero.feasible {
        return finish(0.0, 0.0, at_zero);
    }
    let mut hi = 2.0 * s;
    let top = abs_monotonic(tableau, hi, entry_tol);
    if top.feasible {
        return finish(hi, hi, top);
    }
    let mut lo = 0.0;
    let mut cert = at_zero;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let rep = abs_monotonic(tableau, mid, entry_tol);
        if rep.feasible {
            lo = mid;
            cert = rep;
        } else {
            hi = mid;
        }
    }
    finish(lo, hi, cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ssprk33() -> ButcherTableau {
        ButcherTableau::from_lower(&[vec![1.0], vec![0.25, 0.25]], vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]).unwrap()
    }

    fn rk4() -> ButcherTableau {
        ButcherTableau::from_lower(
            &[vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        )
        .unwrap()
    }

    #[test]
    fn forward_euler_radius_is_one() {
        let fe = ButcherTableau::forward_euler();
        assert!(abs_monotonic(&fe, 1.0, DEFAULT_ENTRY_TOL).feasible);
        let rep = abs_monotonic(&fe, 1.0 + 1e-6, DEFAULT_ENTRY_TOL);
        assert!(!rep.feasible);
        assert_eq!(rep.min_at, Block::Vector { row: 1 });
        let res = ssp_coefficient(&fe, DEFAULT_BISECTION_TOL);
        assert!((res.coefficient - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssprk33_radius() {
        assert!(abs_monotonic(&ssprk33(), 1.0, DEFAULT_ENTRY_TOL).feasible);
        let res = ssp_coefficient(&ssprk33(), DEFAULT_BISECTION_TOL);
        assert!((res.coefficient - 1.0).abs() < 1e-9);
        assert!((res.effective_coefficient - 1.0 / 3.0).abs() < 1e-9);
        assert!(res.bracket.1 - res.bracket.0 <= DEFAULT_BISECTION_TOL);
    }

    #[test]
    fn rk4_has_zero_radius() {
        assert!(!abs_monotonic(&rk4(), 0.05, DEFAULT_ENTRY_TOL).feasible);
        assert!(ssp_coefficient(&rk4(), DEFAULT_BISECTION_TOL).coefficient < 1e-9);
    }

    #[test]
    fn negative_weight_is_infeasible_at_zero() {
        let t = ButcherTableau::from_lower(&[vec![1.0]], vec![1.5, -0.5]).unwrap();
        let res = ssp_coefficient(&t, DEFAULT_BISECTION_TOL);
        assert_eq!(res.coefficient, 0.0);
        assert!(!res.certificate.feasible);
    }

    #[test]
    fn matrix_matches_explicit_inverse() {
        let p = shu_osher_matrix(&ssprk33(), 1.0);
        // At r = 1 these are the familiar Shu–Osher coefficients.
        assert!((p[1][0] - 1.0).abs() < 1e-15);
        assert!(p[2][0].abs() < 1e-15);
        assert!((p[2][1] - 0.25).abs() < 1e-15);
        assert!(p[3][0].abs() < 1e-15);
        assert!(p[3][1].abs() < 1e-15);
        assert!((p[3][2] - 2.0 / 3.0).abs() < 1e-15);
    }
}
