//! Browser bindings for the completion library.
//!
//! Each export returns a JSON string; failures come back as `{"error": "..."}`.
//! Nothing here reads the clock, since `std::time` is unavailable on
//! `wasm32-unknown-unknown`; the page times calls itself.

use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use fibertt::completion::{complete, Combine, CompletionConfig};
use fibertt::harness::{add_noise, median, random_tt, relative_error, trial_seed};
use fibertt::pattern::{mask_apply, random_pattern, validate};
use fibertt::subspace::SubspaceMethod;

fn dims(v: &[u32]) -> Vec<usize> {
    v.iter().map(|&d| d as usize).collect()
}

fn render(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn options(method: &str, combine: &str) -> Result<(SubspaceMethod, Combine), String> {
    Ok((method.parse()?, combine.parse()?))
}

/// Draws a random fiber pattern and checks it against the uniqueness conditions.
#[wasm_bindgen]
pub fn validate_random(base_shape: &[u32], ranks: &[u32], missing_rate: f64, seed: u32) -> String {
    render((|| {
        let p = random_pattern(&dims(base_shape), missing_rate, u64::from(seed)).map_err(|e| e.to_string())?;
        let report = validate(&p, &dims(ranks)).map_err(|e| e.to_string())?;
        Ok(json!({ "observed": p.flags(), "report": report }))
    })())
}

/// One synthetic completion: random train, exact-SNR noise, random pattern.
#[wasm_bindgen]
pub fn complete_synthetic(
    shape: &[u32],
    ranks: &[u32],
    missing_rate: f64,
    snr_db: f64,
    method: &str,
    combine: &str,
    seed: u32,
) -> String {
    render((|| {
        let (shape, ranks) = (dims(shape), dims(ranks));
        let (method, combine) = options(method, combine)?;
        let seed = u64::from(seed);
        let clean = random_tt(&shape, &ranks, seed).map_err(|e| e.to_string())?.to_dense();
        let noisy = add_noise(&clean, snr_db, seed ^ 0x9e37).map_err(|e| e.to_string())?;
        let p = random_pattern(&shape[..shape.len() - 1], missing_rate, seed ^ 0x7f4a).map_err(|e| e.to_string())?;
        let masked = mask_apply(&noisy, &p).map_err(|e| e.to_string())?;
        let mut cfg = CompletionConfig::new(ranks);
        cfg.method = method;
        cfg.combine = combine;
        let out = complete(&masked, &p, &cfg).map_err(|e| e.to_string())?;
        let err = relative_error(&clean, &out.tt.to_dense()).map_err(|e| e.to_string())?;
        let gaps: Vec<f64> = out.diagnostics.unfoldings.iter().map(|u| u.subspace.gap).collect();
        Ok(json!({
            "relative_error": err,
            "observed_fibers": out.diagnostics.observed_fibers,
            "total_fibers": p.fiber_count(),
            "gaps": gaps,
            "stored_values": out.tt.storage_len(),
        }))
    })())
}

/// Median completion error for each SNR over `trials` seeded trials.
/// Trials whose pattern fails validation are not counted.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn snr_curve(
    shape: &[u32],
    ranks: &[u32],
    missing_rate: f64,
    snrs: &[f64],
    trials: u32,
    method: &str,
    combine: &str,
    seed: u32,
) -> String {
    render((|| {
        let (shape, ranks) = (dims(shape), dims(ranks));
        let (method, combine) = options(method, combine)?;
        let mut cfg = CompletionConfig::new(ranks.clone());
        cfg.method = method;
        cfg.combine = combine;
        let mut points = Vec::new();
        for (si, &snr) in snrs.iter().enumerate() {
            let mut errors = Vec::new();
            for t in 0..trials as usize {
                let h = trial_seed(u64::from(seed), si, 0, t);
                let clean = random_tt(&shape, &ranks, h).map_err(|e| e.to_string())?.to_dense();
                let noisy = add_noise(&clean, snr, h ^ 2).map_err(|e| e.to_string())?;
                let p = random_pattern(&shape[..shape.len() - 1], missing_rate, h ^ 3).map_err(|e| e.to_string())?;
                if let Ok(out) = complete(&mask_apply(&noisy, &p).map_err(|e| e.to_string())?, &p, &cfg) {
                    errors.push(relative_error(&clean, &out.tt.to_dense()).map_err(|e| e.to_string())?);
                }
            }
            points.push(json!({ "snr_db": snr, "median_error": median(&errors), "counted": errors.len() }));
        }
        Ok(json!({ "points": points }))
    })())
}
