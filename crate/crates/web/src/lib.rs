//! Browser demo. The plain functions below do the work and are tested
//! natively; on wasm32 they are exported as JSON-in, JSON-out bindings.

use mpa_core::data::{synth_domain_pair, SynthSpec, SyntheticPair};
use mpa_core::eval::{score_task, Direction};
use mpa_core::medoids::{kmedoids_fit, DEFAULT_MAX_SWAP_ROUNDS};
use mpa_core::numerics::Matrix;
use mpa_core::objective::correspondence;
use mpa_core::pipeline::{project_domains, run_mpa, HyperParams};
use mpa_core::{MpaError, Result};
use serde::Serialize;

/// Both domains in their own 2-d PCA coordinates, with medoids marked.
#[derive(Debug, Clone, Serialize)]
pub struct Scatter {
    pub source: Vec<[f64; 2]>,
    pub source_labels: Vec<u8>,
    pub target: Vec<[f64; 2]>,
    /// Hidden ground truth, shown for colouring only.
    pub target_labels: Vec<u8>,
    pub source_medoids: Vec<usize>,
    pub target_medoids: Vec<usize>,
}

/// Target-to-source prototype correspondence at one temperature.
#[derive(Debug, Clone, Serialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub tau: f64,
    /// Row-major, `rows × cols`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub accuracy: f64,
    pub f1: f64,
    /// Per epoch: supervised, prototype, entropy, total.
    pub loss: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub aligned: RunSummary,
    /// Same run with alpha = beta = 0.
    pub source_only: RunSummary,
}

fn pair(spec: &SynthSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    synth_domain_pair(spec)
}

fn points(m: &Matrix) -> Vec<[f64; 2]> {
    m.row_iter().map(|r| [r[0], r[1]]).collect()
}

pub fn scatter(spec: &SynthSpec, k: usize) -> Result<Scatter> {
    let p = pair(spec)?;
    let space = project_domains(&p.source, &p.target, 2)?;
    let ms = kmedoids_fit(&space.z_source, k, DEFAULT_MAX_SWAP_ROUNDS)?;
    let mt = kmedoids_fit(&space.z_target, k, DEFAULT_MAX_SWAP_ROUNDS)?;
    Ok(Scatter {
        source: points(&space.z_source),
        source_labels: p.source.require_labels()?.to_vec(),
        target: points(&space.z_target),
        target_labels: p.hidden_target_labels,
        source_medoids: ms.medoid_indices,
        target_medoids: mt.medoid_indices,
    })
}

/// Correspondence between medoids of the projected domains (before any
/// encoder), which is what the first training epoch sees.
pub fn heatmap(spec: &SynthSpec, d: usize, k: usize, tau: f64) -> Result<Heatmap> {
    let p = pair(spec)?;
    let space = project_domains(&p.source, &p.target, d)?;
    let ms = kmedoids_fit(&space.z_source, k, DEFAULT_MAX_SWAP_ROUNDS)?;
    let mt = kmedoids_fit(&space.z_target, k, DEFAULT_MAX_SWAP_ROUNDS)?;
    let a = correspondence(&mt.medoid_points, &ms.medoid_points, tau)?;
    Ok(Heatmap {
        rows: a.weights.rows(),
        cols: a.weights.cols(),
        tau,
        weights: a.weights.as_slice().to_vec(),
    })
}

fn summarize(p: &SyntheticPair, h: &HyperParams) -> Result<RunSummary> {
    let model = run_mpa(&p.source, &p.target, h)?;
    let pred = mpa_core::pipeline::argmax_labels(&model.target_probabilities);
    let score = score_task(&pred, &p.hidden_target_labels, "demo", Direction::Forward)?;
    Ok(RunSummary {
        accuracy: score.accuracy,
        f1: score.f1,
        loss: model
            .loss_history
            .iter()
            .map(|l| [l.l_sup, l.l_proto, l.l_ent, l.total])
            .collect(),
    })
}

pub fn train(spec: &SynthSpec, h: &HyperParams) -> Result<TrainSummary> {
    h.validate()?;
    let p = pair(spec)?;
    let ablation = HyperParams {
        alpha: 0.0,
        beta: 0.0,
        ..h.clone()
    };
    Ok(TrainSummary {
        aligned: summarize(&p, h)?,
        source_only: summarize(&p, &ablation)?,
    })
}

/// Parses a JSON object into a config type; missing keys take defaults.
pub fn parse<T: serde::de::DeserializeOwned>(json: &str) -> Result<T> {
    let json = if json.trim().is_empty() { "{}" } else { json };
    serde_json::from_str(json).map_err(|e| MpaError::Config(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| MpaError::Config(e.to_string()))
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use super::*;
    use wasm_bindgen::prelude::*;

    fn js(r: Result<String>) -> std::result::Result<String, JsError> {
        r.map_err(|e| JsError::new(&e.to_string()))
    }

    #[wasm_bindgen]
    pub fn scatter_json(spec: &str, k: usize) -> std::result::Result<String, JsError> {
        js(parse(spec)
            .and_then(|s| scatter(&s, k))
            .and_then(|v| to_json(&v)))
    }

    #[wasm_bindgen]
    pub fn heatmap_json(
        spec: &str,
        d: usize,
        k: usize,
        tau: f64,
    ) -> std::result::Result<String, JsError> {
        js(parse(spec)
            .and_then(|s| heatmap(&s, d, k, tau))
            .and_then(|v| to_json(&v)))
    }

    #[wasm_bindgen]
    pub fn train_json(spec: &str, hyper: &str) -> std::result::Result<String, JsError> {
        js(parse(spec)
            .and_then(|s| parse(hyper).map(|h| (s, h)))
            .and_then(|(s, h)| train(&s, &h))
            .and_then(|v| to_json(&v)))
    }
}
