//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function has a plain Rust twin that returns
//! `Result<_, String>`, so the logic is testable off the browser.

use plasticity_lab::envs::{Cell, Layout};
use plasticity_lab::learners::{categorical_projection, CategoricalHead};
use plasticity_lab::metrics::{effective_rank_from_values, stable_rank_from_values};
use plasticity_lab::numkit::{svd_values, Matrix};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Singular values, stable rank and effective rank of a row-major matrix,
/// as a JSON object.
pub fn spectrum_json(rows: usize, cols: usize, data: Vec<f64>) -> Result<String, String> {
    let m = Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?;
    let sv = svd_values(&m).map_err(|e| e.to_string())?;
    // ranks are undefined for the zero matrix; report null rather than fail
    let sr = stable_rank_from_values(&sv).ok();
    let er = effective_rank_from_values(&sv).ok();
    Ok(json!({ "singular_values": sv, "stable_rank": sr, "effective_rank": er }).to_string())
}

/// Distributional Bellman target for one transition, on the support
/// `linspace(v_min, v_max, probs.len())`.
pub fn project(probs: &[f64], reward: f64, gamma: f64, done: bool, v_min: f64, v_max: f64) -> Result<Vec<f64>, String> {
    let head = CategoricalHead::new(v_min, v_max, probs.len()).map_err(|e| e.to_string())?;
    categorical_projection(probs, reward, done, gamma, &head).map_err(|e| e.to_string())
}

/// Text rendering of a gridworld level: `#` wall, `x` hazard, `A` agent,
/// `G` goal, `.` floor. One row per line.
pub fn level_text(size: usize, level_seed: u64) -> Result<String, String> {
    let layout = Layout::generate(size, level_seed).map_err(|e| e.to_string())?;
    let mut out = String::with_capacity(size * (size + 1));
    for r in 0..size {
        for c in 0..size {
            out.push(if (r, c) == layout.agent {
                'A'
            } else if (r, c) == layout.goal {
                'G'
            } else {
                match layout.cell(r, c) {
                    Cell::Floor => '.',
                    Cell::Wall => '#',
                    Cell::Hazard => 'x',
                }
            });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Length of the shortest agent-to-goal path.
pub fn level_path_length(size: usize, level_seed: u64) -> Result<usize, String> {
    let layout = Layout::generate(size, level_seed).map_err(|e| e.to_string())?;
    layout.shortest_path().ok_or_else(|| "level has no path".into())
}

#[wasm_bindgen]
pub fn spectrum(rows: usize, cols: usize, data: Vec<f64>) -> Result<String, JsError> {
    spectrum_json(rows, cols, data).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn c51_project(
    probs: Vec<f64>,
    reward: f64,
    gamma: f64,
    done: bool,
    v_min: f64,
    v_max: f64,
) -> Result<Vec<f64>, JsError> {
    project(&probs, reward, gamma, done, v_min, v_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gridworld_level(size: usize, level_seed: u64) -> Result<String, JsError> {
    level_text(size, level_seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gridworld_path_length(size: usize, level_seed: u64) -> Result<usize, JsError> {
    level_path_length(size, level_seed).map_err(|e| JsError::new(&e))
}
