//! Browser bindings for three interactive operations: a destination map of a
//! random slicing plane, the attractor trace inside the invariant plane, and
//! the uncertainty fraction at one perturbation size.
//!
//! The plain functions do the work and are what the native tests call; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use wasm_bindgen::prelude::*;

use riddled_core::basin::{self, Extents};
use riddled_core::dataset;
use riddled_core::dynamics::{self, TrainConfig};
use riddled_core::symmetry::{self, DestinationLabel};
use riddled_core::uncertainty::{self, SamplingMode, UncertaintyOptions};

const MAX_RESOLUTION: usize = 257;
const MAX_TRACE_EPOCHS: usize = 1_000_000;
const MAX_PAIRS: usize = 5000;

#[wasm_bindgen(start)]
pub fn start() {
    console_error_panic_hook::set_once();
}

/// RGBA pixels (`res × res`, `v_max` in the top row) of the destination map
/// followed by the four label counts as little-endian u32.
pub fn destination_map(eta: f64, epochs: usize, res: usize, extent: f64, seed: u64) -> Result<Vec<u8>, String> {
    if !(2..=MAX_RESOLUTION).contains(&res) {
        return Err(format!("resolution must be between 2 and {MAX_RESOLUTION}"));
    }
    let plane = basin::make_plane(seed, Extents::symmetric(extent), (res, res)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::with_eta(eta, epochs);
    let shortcut = res % 2 == 1;
    let grid = basin::sweep(
        &plane,
        &dataset::canonical(),
        &cfg,
        symmetry::DEFAULT_THRESHOLD_D,
        shortcut,
        1,
    )
    .map_err(|e| e.to_string())?;
    let mut px = Vec::with_capacity(4 * res * res + 16);
    for j in (0..res).rev() {
        for i in 0..res {
            px.extend_from_slice(&basin::palette(grid.label(i, j)));
            px.push(255);
        }
    }
    for c in grid.counts() {
        px.extend_from_slice(&(c as u32).to_le_bytes());
    }
    Ok(px)
}

/// Flat `[u0, v0, u1, v1, …]` coordinates of the trace from plus-plane
/// coordinates `(a1, a2)`.
pub fn attractor(eta: f64, epochs: usize, a1: f64, a2: f64, discard_tail: usize) -> Result<Vec<f64>, String> {
    if epochs > MAX_TRACE_EPOCHS {
        return Err(format!("at most {MAX_TRACE_EPOCHS} epochs"));
    }
    let cfg = TrainConfig::with_eta(eta, epochs);
    cfg.validate().map_err(|e| e.to_string())?;
    let theta0 = symmetry::from_plus_coords([a1, a2, 0.0, 0.0]);
    let trace = dynamics::attractor_trace(&theta0, &dataset::canonical(), &cfg, discard_tail).map_err(|e| e.to_string())?;
    Ok(trace.into_iter().flat_map(|(u, v)| [u, v]).collect())
}

/// `[f, stderr]` for `pairs` torus-shell pairs at perturbation size `eps`.
pub fn uncertainty(eta: f64, epochs: usize, eps: f64, pairs: usize, seed: u64) -> Result<Vec<f64>, String> {
    if pairs > MAX_PAIRS {
        return Err(format!("at most {MAX_PAIRS} pairs"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err("epsilon must be positive".into());
    }
    let opts = UncertaintyOptions {
        n_pairs: pairs,
        mode: SamplingMode::TorusShell,
        seed,
        workers: 1,
        ..Default::default()
    };
    let p = uncertainty::uncertain_fraction(eps, &dataset::canonical(), &TrainConfig::with_eta(eta, epochs), &opts)
        .map_err(|e| e.to_string())?;
    Ok(vec![p.f, p.stderr])
}

/// Label names in code order, for the legend.
pub fn label_names() -> Vec<String> {
    DestinationLabel::ALL.iter().map(|l| l.name().to_string()).collect()
}

#[wasm_bindgen(js_name = destinationMap)]
pub fn destination_map_js(eta: f64, epochs: usize, res: usize, extent: f64, seed: u32) -> Result<Vec<u8>, JsError> {
    destination_map(eta, epochs, res, extent, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = attractorTrace)]
pub fn attractor_js(eta: f64, epochs: usize, a1: f64, a2: f64, discard_tail: usize) -> Result<Vec<f64>, JsError> {
    attractor(eta, epochs, a1, a2, discard_tail).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = uncertainFraction)]
pub fn uncertainty_js(eta: f64, epochs: usize, eps: f64, pairs: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    uncertainty(eta, epochs, eps, pairs, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = labelNames)]
pub fn label_names_js() -> Vec<String> {
    label_names()
}
