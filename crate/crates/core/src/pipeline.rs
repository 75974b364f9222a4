//! End-to-end training: standardize each domain, project to the shared
//! dimension, extract medoid prototypes, then optimize the full objective
//! with full-batch Adam.

use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::{MpaError, Result};
use crate::medoids::{kmedoids_fit, MedoidSet, DEFAULT_MAX_SWAP_ROUNDS};
use crate::model::{init_params, MlpParams};
use crate::numerics::{Matrix, PcaProjection, SeededRng, StandardScaler};
use crate::objective::{
    supervised_loss_and_grads, total_loss_and_grads, LossBreakdown, ObjectiveConfig, TrainingBatch,
};

/// Training configuration. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub d: usize,
    pub k_source: usize,
    pub k_target: usize,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub seed: u64,
    /// Re-extract prototypes every this many epochs; 0 keeps them fixed.
    pub medoid_refresh_every: usize,
    pub differentiate_correspondence: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d: 8,
            k_source: 10,
            k_target: 10,
            tau: 1.0,
            // L_proto sums over K_t prototype rows
            alpha: 0.1 / 10.0,
            beta: 0.1,
            learning_rate: 1e-2,
            epochs: 500,
            hidden: vec![16],
            latent: 8,
            seed: 0,
            medoid_refresh_every: 0,
            differentiate_correspondence: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(MpaError::Config(format!("{key}: {why}")));
        if self.d == 0 {
            return bad("d", "must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", "must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be nonnegative");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be nonnegative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.k_source == 0 {
            return bad("k_source", "must be at least 1");
        }
        if self.k_target == 0 {
            return bad("k_target", "must be at least 1");
        }
        if self.latent == 0 || self.hidden.contains(&0) {
            return bad("hidden/latent", "layer widths must be positive");
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            tau: self.tau,
            alpha: self.alpha,
            beta: self.beta,
            differentiate_correspondence: self.differentiate_correspondence,
        }
    }
}

/// Everything needed to score new target rows, plus the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub scaler_source: StandardScaler,
    pub scaler_target: StandardScaler,
    pub pca_source: PcaProjection,
    pub pca_target: PcaProjection,
    pub prototypes_source: MedoidSet,
    pub prototypes_target: MedoidSet,
    pub params: MlpParams,
    pub loss_history: Vec<LossBreakdown>,
    /// Class probabilities of the training target under the final parameters.
    pub target_probabilities: Matrix,
}

/// Standardized and projected domains.
#[derive(Debug, Clone)]
pub struct SharedSpace {
    pub scaler_source: StandardScaler,
    pub scaler_target: StandardScaler,
    pub pca_source: PcaProjection,
    pub pca_target: PcaProjection,
    pub z_source: Matrix,
    pub z_target: Matrix,
}

/// Per-domain standardization and PCA to the shared dimension `d`.
pub fn project_domains(
    source: &DomainDataset,
    target: &DomainDataset,
    d: usize,
) -> Result<SharedSpace> {
    let scaler_source = StandardScaler::fit(&source.features)?;
    let scaler_target = StandardScaler::fit(&target.features)?;
    let xs = scaler_source.apply(&source.features)?;
    let xt = scaler_target.apply(&target.features)?;
    let pca_source = PcaProjection::fit(&xs, d)?;
    let pca_target = PcaProjection::fit(&xt, d)?;
    let z_source = pca_source.transform(&xs)?;
    let z_target = pca_target.transform(&xt)?;
    Ok(SharedSpace {
        scaler_source,
        scaler_target,
        pca_source,
        pca_target,
        z_source,
        z_target,
    })
}

fn check_inputs(source: &DomainDataset, target: &DomainDataset, h: &HyperParams) -> Result<()> {
    h.validate()?;
    let labels = source.require_labels()?;
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(MpaError::Label("source must contain both classes".into()));
    }
    if target.labels.is_some() {
        return Err(MpaError::Input(
            "target dataset must not carry labels during training".into(),
        ));
    }
    let limit = source.dim().min(target.dim());
    if h.d > limit {
        return Err(MpaError::Dimension(format!(
            "shared dimension {} exceeds the smaller feature width {limit}",
            h.d
        )));
    }
    if h.k_source > source.len() {
        return Err(MpaError::Size(format!(
            "k_source {} exceeds {} source rows",
            h.k_source,
            source.len()
        )));
    }
    if h.k_target > target.len() {
        return Err(MpaError::Size(format!(
            "k_target {} exceeds {} target rows",
            h.k_target,
            target.len()
        )));
    }
    Ok(())
}

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(lr: f64, size: usize) -> Self {
        Adam {
            lr,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

fn with_epoch(e: MpaError, epoch: usize) -> MpaError {
    match e {
        MpaError::NonFiniteTerm(term) => MpaError::NonFiniteLoss { term, epoch },
        other => other,
    }
}

/// Re-clusters each domain in the current latent space. Prototypes stay
/// actual projected samples.
fn refresh_prototypes(params: &MlpParams, z: &Matrix, k: usize) -> Result<MedoidSet> {
    let latent = params.encode(z)?.0;
    let clustered = kmedoids_fit(&latent, k, DEFAULT_MAX_SWAP_ROUNDS)?;
    Ok(MedoidSet {
        medoid_points: z.select_rows(&clustered.medoid_indices),
        ..clustered
    })
}

/// Trains with the full prototype-calibrated objective.
pub fn run_mpa(
    source: &DomainDataset,
    target: &DomainDataset,
    h: &HyperParams,
) -> Result<TrainedModel> {
    run_mpa_observed(source, target, h, |_, _| {})
}

/// [`run_mpa`] with a callback receiving the parameters after every update.
pub fn run_mpa_observed(
    source: &DomainDataset,
    target: &DomainDataset,
    h: &HyperParams,
    mut observe: impl FnMut(usize, &MlpParams),
) -> Result<TrainedModel> {
    check_inputs(source, target, h)?;
    let labels = source.require_labels()?;
    let space = project_domains(source, target, h.d)?;
    let mut proto_s = kmedoids_fit(&space.z_source, h.k_source, DEFAULT_MAX_SWAP_ROUNDS)?;
    let mut proto_t = kmedoids_fit(&space.z_target, h.k_target, DEFAULT_MAX_SWAP_ROUNDS)?;

    let mut params = init_params(h.d, &h.hidden, h.latent, &mut SeededRng::new(h.seed))?;
    let mut adam = Adam::new(h.learning_rate, params.num_values());
    let cfg = h.objective();
    let mut history = Vec::with_capacity(h.epochs);
    for epoch in 0..h.epochs {
        if h.medoid_refresh_every > 0 && epoch > 0 && epoch % h.medoid_refresh_every == 0 {
            proto_s = refresh_prototypes(&params, &space.z_source, h.k_source)?;
            proto_t = refresh_prototypes(&params, &space.z_target, h.k_target)?;
        }
        let batch = TrainingBatch {
            source: &space.z_source,
            source_labels: labels,
            target: &space.z_target,
            source_prototypes: &proto_s.medoid_points,
            target_prototypes: &proto_t.medoid_points,
        };
        let (loss, grads) =
            total_loss_and_grads(&params, &batch, &cfg).map_err(|e| with_epoch(e, epoch))?;
        adam.step(&mut params, &grads);
        if !params.values().all(|v| v.is_finite()) {
            return Err(MpaError::NonFiniteLoss {
                term: "parameters",
                epoch,
            });
        }
        history.push(loss);
        observe(epoch, &params);
    }

    let target_probabilities = params.predict_proba(&space.z_target)?;
    Ok(TrainedModel {
        scaler_source: space.scaler_source,
        scaler_target: space.scaler_target,
        pca_source: space.pca_source,
        pca_target: space.pca_target,
        prototypes_source: proto_s,
        prototypes_target: proto_t,
        params,
        loss_history: history,
        target_probabilities,
    })
}

/// Plain source-supervised training on the same projection and
/// initialization, without prototypes or the target entropy term. Returns
/// the final parameters.
pub fn train_source_only(
    source: &DomainDataset,
    target: &DomainDataset,
    h: &HyperParams,
    mut observe: impl FnMut(usize, &MlpParams),
) -> Result<MlpParams> {
    check_inputs(source, target, h)?;
    let labels = source.require_labels()?;
    let space = project_domains(source, target, h.d)?;
    let mut params = init_params(h.d, &h.hidden, h.latent, &mut SeededRng::new(h.seed))?;
    let mut adam = Adam::new(h.learning_rate, params.num_values());
    for epoch in 0..h.epochs {
        let (_, grads) = supervised_loss_and_grads(&params, &space.z_source, labels)
            .map_err(|e| with_epoch(e, epoch))?;
        adam.step(&mut params, &grads);
        observe(epoch, &params);
    }
    Ok(params)
}

/// Target scaler → target PCA → encoder → classifier. Label is the argmax,
/// ties going to class 0.
pub fn predict_target(model: &TrainedModel, target: &Matrix) -> Result<(Vec<u8>, Matrix)> {
    if target.cols() != model.scaler_target.means.len() {
        return Err(MpaError::Shape(format!(
            "model expects {} target features, got {}",
            model.scaler_target.means.len(),
            target.cols()
        )));
    }
    let z = model
        .pca_target
        .transform(&model.scaler_target.apply(target)?)?;
    let probs = model.params.predict_proba(&z)?;
    Ok((argmax_labels(&probs), probs))
}

pub fn argmax_labels(probs: &Matrix) -> Vec<u8> {
    probs.row_iter().map(|p| u8::from(p[1] > p[0])).collect()
}

/// Moving average of the total loss over a trailing window.
pub fn moving_average(history: &[LossBreakdown], window: usize) -> Vec<f64> {
    if window == 0 || history.len() < window {
        return Vec::new();
    }
    history
        .windows(window)
        .map(|w| w.iter().map(|l| l.total).sum::<f64>() / window as f64)
        .collect()
}
