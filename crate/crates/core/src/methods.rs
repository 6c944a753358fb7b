//! Closed-form method families and the shipped method catalog.

use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::integrator::{CompositeScheme, IntegrationError};
use crate::order_conditions::{classical_order, effective_order, EffectiveOrderSpec, DEFAULT_ORDER_TOL};
use crate::ssp::{ssp_coefficient, DEFAULT_BISECTION_TOL};
use crate::tableau::{parse_tableau, ButcherTableau, ShuOsherForm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MethodError {
    #[error("{name}: gamma = {value} outside [{lo}, {hi}]")]
    Domain { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("the n^2+1 family is defined for n >= 3, got {0}")]
    FamilyIndex(usize),
    #[error("{label}: {what}")]
    Invariant { label: String, what: String },
    #[error("unknown scheme label {0:?}")]
    UnknownLabel(String),
}

fn check_gamma(name: &'static str, gamma: f64, lo: f64, hi: f64) -> Result<(), MethodError> {
    // Endpoints are given as fractions, so allow their rounding.
    let slack = 1e-14;
    if !(gamma >= lo - slack && gamma <= hi + slack) {
        return Err(MethodError::Domain { name, value: gamma, lo, hi });
    }
    Ok(())
}

/// Three-stage family with SSP coefficient 1; `gamma = 1/4` is SSPRK(3,3).
pub fn essprk_332(gamma: f64) -> Result<ButcherTableau, MethodError> {
    check_gamma("essprk_332", gamma, 0.25, 1.0)?;
    let b = vec![(5.0 * gamma - 1.0) / (6.0 * gamma), 1.0 / 6.0, 1.0 / (6.0 * gamma)];
    Ok(ButcherTableau::from_lower(&[vec![1.0], vec![gamma, gamma]], b).expect("well-formed"))
}

/// Four-stage family with SSP coefficient 2; `gamma = 1/6` is SSPRK(4,3).
pub fn essprk_432(gamma: f64) -> Result<ButcherTableau, MethodError> {
    check_gamma("essprk_432", gamma, 1.0 / 6.0, 0.5)?;
    let b = vec![(8.0 * gamma - 1.0) / (12.0 * gamma), 1.0 / 6.0, 1.0 / 6.0, 1.0 / (12.0 * gamma)];
    let lower = [vec![0.5], vec![0.5, 0.5], vec![gamma, gamma, gamma]];
    Ok(ButcherTableau::from_lower(&lower, b).expect("well-formed"))
}

pub fn ssprk33() -> ButcherTableau {
    essprk_332(0.25).expect("in range")
}

pub fn ssprk43() -> ButcherTableau {
    essprk_432(1.0 / 6.0).expect("in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

/// Second-order methods with `n^2 + 1` stages, effective order four and SSP
/// coefficient `n^2 - n`, in modified Shu–Osher form.
pub fn family_n2p1(n: usize, branch: Branch) -> Result<ShuOsherForm, MethodError> {
    if n < 3 {
        return Err(MethodError::FamilyIndex(n));
    }
    let nf = n as f64;
    let s = n * n + 1;
    let mut v = vec![0.0; s + 1];
    let mut alpha = vec![vec![0.0; s]; s + 1];
    v[0] = 1.0;
    let v_last = 2.0 / ((nf * nf + 1.0) * ((nf - 1.0).powi(2) + 1.0));
    v[s] = v_last;
    let root = (nf.powi(3) - 3.0 * nf * nf + nf + 1.0).sqrt();
    let sign = if branch == Branch::Plus { 1.0 } else { -1.0 };
    let branch_value = (nf * nf - 1.0 + sign * root) / (4.0 * nf * nf - 6.0 * nf + 2.0);
    // 1-based row n^2-2n+4, column (n-2)^2.
    let (br, bc) = (n * n - 2 * n + 3, (n - 2) * (n - 2) - 1);
    alpha[br][bc] = branch_value;
    for i in 1..=n * n {
        alpha[i][i - 1] = if i == br { 1.0 - branch_value } else { 1.0 };
    }
    let last_chain = nf * (nf - 1.0).powi(2) / ((2.0 * nf - 1.0) * (nf * nf + 1.0) * (1.0 - branch_value));
    alpha[s][s - 1] = last_chain;
    alpha[s][n * n - 2 * n + 1] = 1.0 - v_last - last_chain;
    let r = nf * nf - nf;
    let beta = alpha.iter().map(|row| row.iter().map(|a| a / r).collect()).collect();
    Ok(ShuOsherForm::new(v, alpha, beta).expect("family coefficients form a valid Shu–Osher method"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub label: String,
    pub main: ButcherTableau,
    pub r: Option<ButcherTableau>,
    pub t: Option<ButcherTableau>,
    pub q: u32,
    pub p: u32,
    /// Published SSP coefficient.
    pub ssp_coefficient: f64,
    /// Whether the published value is exact; otherwise it was published as
    /// a two-decimal effective coefficient `C / s`.
    pub exact: bool,
}

/// Recomputed properties of a catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryCheck {
    pub label: String,
    pub stages: usize,
    pub q: u32,
    pub p: u32,
    pub effective_order: u32,
    pub classical_order: u32,
    pub ssp_coefficient: f64,
    pub published: f64,
}

impl CatalogEntry {
    pub fn stages(&self) -> usize {
        self.main.stages()
    }

    /// Recomputes orders and SSP coefficient without trusting the metadata.
    pub fn verify(&self) -> Result<EntryCheck, MethodError> {
        let fail = |what: String| MethodError::Invariant { label: self.label.clone(), what };
        let eff = effective_order(&self.main, DEFAULT_ORDER_TOL);
        let cls = classical_order(&self.main, DEFAULT_ORDER_TOL).order;
        let c = ssp_coefficient(&self.main, DEFAULT_BISECTION_TOL).coefficient;
        if eff < self.q {
            return Err(fail(format!("effective order {eff} < {}", self.q)));
        }
        if cls != self.p {
            return Err(fail(format!("classical order {cls} != {}", self.p)));
        }
        let s = self.stages() as f64;
        let ok = if self.exact {
            (c - self.ssp_coefficient).abs() <= 1e-6
        } else {
            (c / s - self.ssp_coefficient / s).abs() <= 0.005 + 1e-12
        };
        if !ok {
            return Err(fail(format!("SSP coefficient {c} does not match published {}", self.ssp_coefficient)));
        }
        Ok(EntryCheck {
            label: self.label.clone(),
            stages: self.stages(),
            q: self.q,
            p: self.p,
            effective_order: eff,
            classical_order: cls,
            ssp_coefficient: c,
            published: self.ssp_coefficient,
        })
    }

    /// Composite scheme using the stored starting and stopping methods, or
    /// the main method itself when it has classical order `q`.
    pub fn scheme(&self) -> Result<CompositeScheme, IntegrationError> {
        match (&self.r, &self.t) {
            (Some(r), Some(t)) => {
                let spec = EffectiveOrderSpec::new(self.q, self.p.min(self.q - 1))?;
                CompositeScheme::new(r.clone(), self.main.clone(), t.clone(), spec)
            }
            _ if self.p >= self.q => CompositeScheme::classical(self.main.clone(), self.q),
            _ => Err(IntegrationError::Problem(format!("{} has no starting and stopping methods", self.label))),
        }
    }
}

pub const DEFAULT_GAMMA_332: f64 = 0.5;
pub const DEFAULT_GAMMA_432: f64 = 0.25;

macro_rules! shipped {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/catalog/", $name, ".json"))
    };
}

fn load(text: &str) -> ButcherTableau {
    parse_tableau(text.as_bytes()).expect("shipped catalog file parses").1
}

fn with_rt(label: &str, main: &str, r: &str, t: &str, q: u32, p: u32, c: f64, exact: bool) -> CatalogEntry {
    CatalogEntry {
        label: label.to_string(),
        main: load(main),
        r: Some(load(r)),
        t: Some(load(t)),
        q,
        p,
        ssp_coefficient: c,
        exact,
    }
}

fn bare(label: &str, main: ButcherTableau, q: u32, p: u32, c: f64) -> CatalogEntry {
    CatalogEntry { label: label.to_string(), main, r: None, t: None, q, p, ssp_coefficient: c, exact: true }
}

fn build() -> Vec<CatalogEntry> {
    let mut out = vec![
        bare("SSPRK(3,3)", ssprk33(), 3, 3, 1.0),
        bare("SSPRK(4,3)", ssprk43(), 3, 3, 2.0),
        with_rt(
            "ESSPRK(3,3,2)",
            shipped!("essprk_3_3_2"),
            shipped!("essprk_3_3_2_R"),
            shipped!("essprk_3_3_2_T"),
            3,
            2,
            1.0,
            true,
        ),
        with_rt(
            "ESSPRK(4,3,2)",
            shipped!("essprk_4_3_2"),
            shipped!("essprk_4_3_2_R"),
            shipped!("essprk_4_3_2_T"),
            3,
            2,
            2.0,
            true,
        ),
        with_rt(
            "ESSPRK(4,4,2)",
            shipped!("essprk_4_4_2"),
            shipped!("essprk_4_4_2_R"),
            shipped!("essprk_4_4_2_T"),
            4,
            2,
            0.88,
            false,
        ),
        with_rt(
            "ESSPRK(4,4,3)",
            shipped!("essprk_4_4_3"),
            shipped!("essprk_4_4_3_R"),
            shipped!("essprk_4_4_3_T"),
            4,
            3,
            0.76,
            false,
        ),
        with_rt(
            "ESSPRK(5,4,2)",
            shipped!("essprk_5_4_2"),
            shipped!("essprk_5_4_2_R"),
            shipped!("essprk_5_4_2_T"),
            4,
            2,
            1.95,
            false,
        ),
    ];
    for n in [3usize, 4] {
        let main = family_n2p1(n, Branch::Plus).and_then(|so| {
            so.to_butcher().map_err(|e| MethodError::Invariant { label: format!("n = {n}"), what: e.to_string() })
        });
        let s = n * n + 1;
        out.push(bare(&format!("ESSPRK({s},4,2)"), main.expect("family converts"), 4, 2, (n * n - n) as f64));
    }
    out
}

/// Every shipped method, verified on first use.
pub fn catalog() -> &'static [CatalogEntry] {
    static CATALOG: OnceLock<Vec<CatalogEntry>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let entries = build();
        for e in &entries {
            if let Err(err) = e.verify() {
                panic!("shipped catalog entry failed verification: {err}");
            }
        }
        entries
    })
}

pub fn lookup(label: &str) -> Result<&'static CatalogEntry, MethodError> {
    let key: String = label.chars().filter(|c| !c.is_whitespace()).collect();
    catalog()
        .iter()
        .find(|e| e.label.eq_ignore_ascii_case(&key))
        .ok_or_else(|| MethodError::UnknownLabel(label.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_conditions::{effective_order_residuals, elementary_weights, max_abs};

    #[test]
    fn family_endpoints_are_classical_methods() {
        let t = essprk_332(0.25).unwrap();
        assert_eq!(t.b(), &[1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]);
        assert_eq!(classical_order(&t, 1e-12).order, 3);
        let t = essprk_332(1.0).unwrap();
        assert!((t.b()[0] - 2.0 / 3.0).abs() < 1e-15 && t.b()[2] == 1.0 / 6.0);
        let t = essprk_432(1.0 / 6.0).unwrap();
        assert!((t.b()[0] - 1.0 / 6.0).abs() < 1e-15 && (t.b()[3] - 0.5).abs() < 1e-15);
        let t = essprk_432(0.5).unwrap();
        assert!(t.b().iter().zip([0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn gamma_domain() {
        assert!(matches!(essprk_332(0.2), Err(MethodError::Domain { .. })));
        assert!(matches!(essprk_332(1.01), Err(MethodError::Domain { .. })));
        assert!(matches!(essprk_432(0.1), Err(MethodError::Domain { .. })));
        assert!(matches!(essprk_432(0.6), Err(MethodError::Domain { .. })));
    }

    #[test]
    fn gamma_sweep_keeps_coefficient() {
        for k in 0..20 {
            let x = k as f64 / 19.0;
            let t3 = essprk_332(0.25 + 0.75 * x).unwrap();
            let t4 = essprk_432(1.0 / 6.0 + x / 3.0).unwrap();
            assert!((ssp_coefficient(&t3, 1e-10).coefficient - 1.0).abs() < 1e-8);
            assert!((ssp_coefficient(&t4, 1e-10).coefficient - 2.0).abs() < 1e-8);
            assert!(effective_order(&t3, 1e-10) >= 3 && effective_order(&t4, 1e-10) >= 3);
            if k > 0 && k < 19 {
                assert_eq!(classical_order(&t3, 1e-10).order, 2);
                assert_eq!(classical_order(&t4, 1e-10).order, 2);
            }
        }
    }

    #[test]
    fn family_pattern_n3() {
        let so = family_n2p1(3, Branch::Plus).unwrap();
        assert_eq!(so.stages(), 10);
        assert!((so.v()[10] - 0.04).abs() < 1e-15);
        assert!((so.alpha()[6][0] - 0.5).abs() < 1e-15);
        assert!((so.alpha()[6][5] - 0.5).abs() < 1e-15);
        let minus = family_n2p1(3, Branch::Minus).unwrap();
        assert!((minus.alpha()[6][0] - 0.3).abs() < 1e-15);
        assert!(matches!(family_n2p1(2, Branch::Plus), Err(MethodError::FamilyIndex(2))));
    }

    #[test]
    fn family_orders_and_coefficient() {
        let spec = EffectiveOrderSpec::new(4, 2).unwrap();
        for n in [3usize, 4] {
            for branch in [Branch::Plus, Branch::Minus] {
                let t = family_n2p1(n, branch).unwrap().to_butcher().unwrap();
                let res = effective_order_residuals(&elementary_weights(&t), spec);
                assert!(max_abs(&res) <= 1e-10, "n={n} {branch:?}: {res:?}");
                assert_eq!(classical_order(&t, 1e-10).order, 2);
                let c = ssp_coefficient(&t, 1e-10).coefficient;
                assert!((c - (n * n - n) as f64).abs() < 1e-6, "n={n}: C={c}");
            }
        }
    }

    #[test]
    fn catalog_loads_and_verifies() {
        let cat = catalog();
        assert_eq!(cat.len(), 9);
        for e in cat {
            let check = e.verify().unwrap();
            assert!(check.ssp_coefficient >= e.ssp_coefficient - 0.005, "{}", e.label);
            if e.r.is_some() {
                e.scheme().unwrap();
            }
        }
    }

    #[test]
    fn catalog_lookup_values() {
        let e = lookup("ESSPRK(4,4,2)").unwrap();
        assert_eq!(e.main.b()[0], 0.384422161080494);
        let e = lookup("essprk(4, 4, 3)").unwrap();
        assert_eq!(e.t.as_ref().unwrap().c()[1], 0.556337718891090);
        assert!(matches!(lookup("RK4"), Err(MethodError::UnknownLabel(_))));
    }

    #[test]
    fn shipped_defaults_match_closed_forms() {
        assert_eq!(lookup("ESSPRK(3,3,2)").unwrap().main, essprk_332(DEFAULT_GAMMA_332).unwrap());
        assert_eq!(lookup("ESSPRK(4,3,2)").unwrap().main, essprk_432(DEFAULT_GAMMA_432).unwrap());
    }
}
