//! WebAssembly bindings behind `www/index.html`. Every export takes and
//! returns plain values or JSON text, so the page needs no bundler.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use essprk::experiments::{run_tvd, BurgersGrid, Profile};
use essprk::methods::{catalog, essprk_332, essprk_432, lookup};
use essprk::order_conditions::{classical_order, effective_order, DEFAULT_ORDER_TOL};
use essprk::ssp::{ssp_coefficient, DEFAULT_BISECTION_TOL};
use essprk::tableau::parse_tableau;

#[derive(Serialize)]
struct BurgersView {
    label: String,
    sigma: f64,
    ssp_coefficient: f64,
    steps: usize,
    final_time: f64,
    monotone: bool,
    max_increase: f64,
    tv: Vec<f64>,
    x: Vec<f64>,
    u: Vec<f64>,
}

/// Labels of catalog methods that can run as composite schemes.
pub fn scheme_labels() -> Vec<String> {
    catalog().iter().filter(|e| e.scheme().is_ok()).map(|e| e.label.clone()).collect()
}

pub fn burgers(label: &str, square: bool, sigma: f64) -> Result<String, String> {
    let entry = lookup(label).map_err(|e| e.to_string())?;
    let scheme = entry.scheme().map_err(|e| e.to_string())?;
    let profile = if square { Profile::SquareWave } else { Profile::Continuous };
    let grid = BurgersGrid::new(200, profile).map_err(|e| e.to_string())?;
    let tf = if square { 0.6 } else { 1.62 };
    let report = run_tvd(&scheme, &grid, sigma, tf).map_err(|e| e.to_string())?;
    // Re-run for the final profile; the report keeps only total variation.
    let ivp = essprk::integrator::Ivp {
        rhs: essprk::experiments::burgers_rhs(&grid),
        u0: grid.initial(),
        t0: 0.0,
        tf: report.final_time,
    };
    let traj = essprk::integrator::run_composite(&scheme, &ivp, report.steps, None).map_err(|e| e.to_string())?;
    let view = BurgersView {
        label: entry.label.clone(),
        sigma,
        ssp_coefficient: scheme.c,
        steps: report.steps,
        final_time: report.final_time,
        monotone: report.monotone,
        max_increase: report.max_increase,
        tv: report.tv_series.clone(),
        x: (0..grid.m).map(|i| grid.x(i)).collect(),
        u: traj.final_state().to_vec(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct FamilyView {
    gamma: f64,
    b: Vec<f64>,
    ssp_coefficient: f64,
    classical_order: u32,
    effective_order: u32,
}

pub fn family(stages: u32, gamma: f64) -> Result<String, String> {
    let t = match stages {
        3 => essprk_332(gamma),
        4 => essprk_432(gamma),
        _ => return Err(format!("no closed-form family with {stages} stages")),
    }
    .map_err(|e| e.to_string())?;
    let view = FamilyView {
        gamma,
        b: t.b().to_vec(),
        ssp_coefficient: ssp_coefficient(&t, DEFAULT_BISECTION_TOL).coefficient,
        classical_order: classical_order(&t, DEFAULT_ORDER_TOL).order,
        effective_order: effective_order(&t, DEFAULT_ORDER_TOL),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CheckView {
    label: String,
    stages: usize,
    classical_order: u32,
    effective_order: u32,
    ssp_coefficient: f64,
}

pub fn check(json: &str) -> Result<String, String> {
    let (doc, t) = parse_tableau(json.as_bytes()).map_err(|e| e.to_string())?;
    let view = CheckView {
        label: doc.label,
        stages: t.stages(),
        classical_order: classical_order(&t, DEFAULT_ORDER_TOL).order,
        effective_order: effective_order(&t, DEFAULT_ORDER_TOL),
        ssp_coefficient: ssp_coefficient(&t, DEFAULT_BISECTION_TOL).coefficient,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = schemeLabels)]
pub fn scheme_labels_js() -> String {
    serde_json::to_string(&scheme_labels()).unwrap_or_default()
}

/// Runs Burgers' equation with `dt = sigma * dt_FE` and returns the total
/// variation history and final profile as JSON.
#[wasm_bindgen(js_name = runBurgers)]
pub fn burgers_js(label: &str, square: bool, sigma: f64) -> Result<String, JsValue> {
    burgers(label, square, sigma).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = familyMethod)]
pub fn family_js(stages: u32, gamma: f64) -> Result<String, JsValue> {
    family(stages, gamma).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = checkTableau)]
pub fn check_js(json: &str) -> Result<String, JsValue> {
    check(json).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burgers_view_round_trips() {
        let v: serde_json::Value = serde_json::from_str(&burgers("ESSPRK(4,4,2)", false, 0.88).unwrap()).unwrap();
        assert_eq!(v["monotone"], true);
        assert_eq!(v["u"].as_array().unwrap().len(), 200);
        assert_eq!(v["tv"].as_array().unwrap().len(), v["steps"].as_u64().unwrap() as usize + 1);
        assert!(burgers("nope", false, 1.0).is_err());
    }

    #[test]
    fn family_coefficient_is_constant() {
        for g in [0.25, 0.6, 1.0] {
            let v: serde_json::Value = serde_json::from_str(&family(3, g).unwrap()).unwrap();
            assert!((v["ssp_coefficient"].as_f64().unwrap() - 1.0).abs() < 1e-8);
        }
        assert!(family(4, 0.9).is_err());
        assert!(family(5, 0.3).is_err());
    }

    #[test]
    fn check_parses_documents() {
        let v: serde_json::Value =
            serde_json::from_str(&check(r#"{"label":"fe","s":1,"A":[[0]],"b":[1]}"#).unwrap()).unwrap();
        assert_eq!(v["classical_order"], 1);
        assert!(check("[]").is_err());
        assert!(scheme_labels().contains(&"ESSPRK(5,4,2)".to_string()));
    }
}
