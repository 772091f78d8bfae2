//! WebAssembly bindings for the static page in `www/`.
//!
//! Results are flat numeric arrays or JSON strings so the page needs no glue
//! beyond what `wasm-bindgen` generates.

use serde_json::json;
use wasm_bindgen::prelude::*;

use degen_core::analysis;
use degen_core::normalized::{self, RegimeLabel};
use degen_core::sweeps::{self, BifurcationSpec};
use degen_core::{optimizers, Method, Monomial, OptimizerParams, RunConfig};

/// Longest trajectory the page may request.
pub const MAX_STEPS: u32 = 200_000;
/// Points kept per plotted curve.
const PLOT_POINTS: usize = 1500;

fn regime_code(label: RegimeLabel) -> u8 {
    match label {
        RegimeLabel::RegimeIStable => 1,
        RegimeLabel::RegimeIIUnstableFp => 2,
        RegimeLabel::RegimeIIINoFp => 3,
        RegimeLabel::BoundaryBand => 4,
        RegimeLabel::LowerLeftException => 5,
    }
}

fn cell_center(index: usize, cells: usize) -> f64 {
    0.01 + 0.98 * (index as f64 + 0.5) / cells as f64
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Predicted regime of every cell of a `cells x cells` grid over
/// `beta1, beta2 in [0.01, 0.99]`, row-major with `beta2` varying fastest.
/// Codes: 1 stable, 2 unstable fixed point, 3 no fixed point, 4 boundary, 5 lower-left.
#[wasm_bindgen]
pub fn regime_map(k: u32, cells: usize) -> Result<Vec<u8>, JsError> {
    regime_codes(k, cells).map_err(js)
}

pub fn regime_codes(k: u32, cells: usize) -> Result<Vec<u8>, String> {
    if k < 4 || k % 2 == 1 {
        return Err("k must be even and at least 4".into());
    }
    let cells = cells.clamp(1, 400);
    let mut out = Vec::with_capacity(cells * cells);
    for i in 0..cells {
        for j in 0..cells {
            let params = OptimizerParams::adam(0.001, cell_center(i, cells), cell_center(j, cells));
            out.push(regime_code(normalized::stability_verdict(&params, k).regime));
        }
    }
    Ok(out)
}

/// Adam from `x0 = 1`. Returns JSON with the predicted regime, the empirical
/// label, and `log10` loss and `omega * lambda * eta` downsampled for plotting.
#[wasm_bindgen]
pub fn trajectory(k: u32, beta1: f64, beta2: f64, eta: f64, steps: u32) -> Result<String, JsError> {
    trajectory_report(k, beta1, beta2, eta, steps).map(|v| v.to_string()).map_err(js)
}

pub fn trajectory_report(k: u32, beta1: f64, beta2: f64, eta: f64, steps: u32) -> Result<serde_json::Value, String> {
    let objective = Monomial::new(k).map_err(|e| e.to_string())?;
    let params = OptimizerParams::adam(eta, beta1, beta2);
    params.validate().map_err(|e| e.to_string())?;
    let cfg = RunConfig::new(Method::Adam, params, objective, 1.0, steps.clamp(10, MAX_STEPS) as u64);
    let traj = optimizers::run(&cfg).map_err(|e| e.to_string())?;
    let regime = analysis::classify_empirical(&traj);
    let stride = (traj.samples.len() / PLOT_POINTS).max(1);
    let kf = k as f64;
    let mut t = Vec::new();
    let mut log_loss = Vec::new();
    let mut step_size = Vec::new();
    for s in traj.samples.iter().step_by(stride) {
        t.push(s.t as f64);
        // from log|x| so values survive past f64 underflow of the loss itself
        log_loss.push((kf * s.log_abs_x - kf.ln()) / std::f64::consts::LN_10);
        step_size.push(eta * s.stability_metric());
    }
    let predicted = if k >= 4 { Some(normalized::stability_verdict(&params, k).regime) } else { None };
    Ok(json!({
        "predicted": predicted,
        "empirical": regime.label,
        "termination": traj.termination,
        "min_loss": regime.evidence.min_loss,
        "floor": regime.evidence.signgd_floor,
        "t": t,
        "log10_loss": log_loss,
        "step_size": step_size,
    }))
}

/// Limit sets of `u -> gamma u (1-u)^(k-2)` as flat `(gamma, u)` pairs.
#[wasm_bindgen]
pub fn bifurcation(k: u32, gamma_min: f64, gamma_max: f64, cells: usize) -> Result<Vec<f64>, JsError> {
    bifurcation_pairs(k, gamma_min, gamma_max, cells).map_err(js)
}

pub fn bifurcation_pairs(k: u32, gamma_min: f64, gamma_max: f64, cells: usize) -> Result<Vec<f64>, String> {
    let spec = BifurcationSpec {
        gamma_min,
        gamma_max,
        count: cells.clamp(1, 2000),
        k,
        ..BifurcationSpec::default()
    };
    let points = sweeps::run_bifurcation_sweep(&spec, 1).map_err(|e| e.to_string())?;
    Ok(points
        .iter()
        .flat_map(|p| p.limit_set.points.iter().flat_map(move |&u| [p.parameter, u]))
        .collect())
}

/// `gamma` at which the sharpness map's fixed point loses stability.
#[wasm_bindgen]
pub fn critical_gamma(k: u32) -> f64 {
    degen_core::theory::sharpness_critical_gamma(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_of_the_map() {
        let map = regime_codes(4, 10).unwrap();
        assert_eq!(map.len(), 100);
        // small beta1, large beta2 converges; large beta1, small beta2 has no fixed point
        assert_eq!(map[9], 1);
        assert_eq!(map[90], 3);
    }

    #[test]
    fn critical_gamma_values() {
        assert!((critical_gamma(4) - 4.0).abs() < 1e-12);
        assert!((critical_gamma(6) - 5.0625).abs() < 1e-12);
    }
}
