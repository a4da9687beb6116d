//! WebAssembly bindings for `www/index.html`. Every export returns JSON.

use adg_core::data::{generate_synthetic, make_loso_splits, SynthSpec};
use adg_core::graphs::{active_graph, AnatomicalGraph, GraphKind, GraphSet, SensorLayout};
use adg_core::model::ModelConfig;
use adg_core::train::{train_fold, TrainConfig, TrainMode};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn rows(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n).map(<[f64]>::to_vec).collect()
}

/// Adjacency and normalized propagation matrix of each anatomical graph.
/// A graph whose normalization fails carries an `error` string instead.
pub fn graphs(layout: &str, self_loops: bool) -> Result<Value, String> {
    let layout = SensorLayout::builtin(layout).ok_or_else(|| format!("unknown layout {layout:?}"))?;
    let n = layout.len();
    let out: Vec<Value> = GraphKind::ALL
        .iter()
        .map(|&kind| {
            let edges = adg_core::graphs::build(&layout, kind).edges();
            match AnatomicalGraph::new(&layout, kind, self_loops) {
                Ok(g) => json!({
                    "kind": kind.title(),
                    "edges": edges,
                    "adjacency": g.adjacency.cells().chunks(n).collect::<Vec<_>>(),
                    "a_hat": rows(&g.a_hat, n),
                }),
                Err(e) => json!({ "kind": kind.title(), "edges": edges, "error": e.to_string() }),
            }
        })
        .collect();
    Ok(json!({ "nodes": layout.names(), "graphs": out }))
}

/// Graph code (`I`, `A`, `L`) of every epoch.
pub fn schedule(epochs: usize, phase_len: usize) -> Result<Value, String> {
    if phase_len == 0 {
        return Err("phase length must be at least 1".into());
    }
    let codes: String = (0..epochs).map(|e| active_graph(e, phase_len).code()).collect();
    Ok(json!({ "epochs": epochs, "phase_len": phase_len, "codes": codes }))
}

/// Trains one small model on the synthetic benchmark with user `U1` held out.
pub fn train(mode: &str, epochs: usize, phase_len: usize, seed: u64) -> Result<Value, String> {
    let mode: TrainMode = mode.parse()?;
    let layout = SensorLayout::builtin("dsads").expect("builtin layout");
    let spec = SynthSpec { windows_per_activity: 12, seed: 100 + seed, ..SynthSpec::default() };
    let layout = layout.with_channels(spec.channels);
    let set = generate_synthetic(&spec, layout.len()).map_err(|e| e.to_string())?;
    let splits = make_loso_splits(&set, &spec.clusters()).map_err(|e| e.to_string())?;
    let graphs = GraphSet::new(&layout, true).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs, phase_len, seed, mode, ..TrainConfig::default() };
    let model = ModelConfig { conv_channels: [4, 8], gcn_widths: [16, 16], ..ModelConfig::default() };
    let (_, report) = train_fold::<f32>(&set, &splits[0], 0, &graphs, &model, &cfg).map_err(|e| e.to_string())?;
    Ok(json!({ "activities": set.activity_names, "report": report }))
}

fn export(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = graphs)]
pub fn graphs_js(layout: &str, self_loops: bool) -> Result<String, JsError> {
    export(graphs(layout, self_loops))
}

#[wasm_bindgen(js_name = schedule)]
pub fn schedule_js(epochs: usize, phase_len: usize) -> Result<String, JsError> {
    export(schedule(epochs, phase_len))
}

#[wasm_bindgen(js_name = train)]
pub fn train_js(mode: &str, epochs: usize, phase_len: usize, seed: u32) -> Result<String, JsError> {
    export(train(mode, epochs, phase_len, seed as u64))
}
