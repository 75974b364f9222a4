//! Prototype-calibrated training objective
//! `L = L_sup + α·L_proto + β·L_ent` and its analytic gradient.
//!
//! By default the soft correspondence `A` is recomputed from the current
//! encodings and then held constant in the backward pass. Setting
//! `differentiate_correspondence` also propagates through the softmax.

use serde::{Deserialize, Serialize};

use crate::error::{MpaError, Result};
use crate::model::{softmax_rows, Layer, MlpParams, NUM_CLASSES};
use crate::numerics::{pairwise_sq_dist, Matrix};

/// Probabilities are clamped to this value before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Row-stochastic soft assignment of target prototypes (rows) to source
/// prototypes (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMatrix {
    pub weights: Matrix,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sup: f64,
    pub l_proto: f64,
    pub l_ent: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossBreakdown {
    pub fn new(l_sup: f64, l_proto: f64, l_ent: f64, alpha: f64, beta: f64) -> Self {
        LossBreakdown {
            l_sup,
            l_proto,
            l_ent,
            total: l_sup + alpha * l_proto + beta * l_ent,
            alpha,
            beta,
        }
    }
}

/// Loss weights and correspondence settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub differentiate_correspondence: bool,
}

/// Everything one objective evaluation needs, already in the shared space.
/// There is deliberately no slot for target labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainingBatch<'a> {
    pub source: &'a Matrix,
    pub source_labels: &'a [u8],
    pub target: &'a Matrix,
    pub source_prototypes: &'a Matrix,
    pub target_prototypes: &'a Matrix,
}

/// `a[ℓ][k] = softmax_k(−‖q_t[ℓ] − q_s[k]‖² / τ)`
pub fn correspondence(
    q_target: &Matrix,
    q_source: &Matrix,
    tau: f64,
) -> Result<CorrespondenceMatrix> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(MpaError::Parameter(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    let dist = pairwise_sq_dist(q_target, q_source)?;
    Ok(correspondence_from_sq_dist(&dist, tau))
}

fn correspondence_from_sq_dist(dist: &Matrix, tau: f64) -> CorrespondenceMatrix {
    let mut logits = dist.clone();
    logits
        .as_mut_slice()
        .iter_mut()
        .for_each(|d| *d = -*d / tau);
    CorrespondenceMatrix {
        weights: softmax_rows(&logits),
        tau,
    }
}

/// `Σ_ℓ Σ_k a[ℓ][k]·‖q_t[ℓ] − q_s[k]‖²`
pub fn proto_loss(q_target: &Matrix, q_source: &Matrix, a: &CorrespondenceMatrix) -> Result<f64> {
    if a.weights.rows() != q_target.rows() || a.weights.cols() != q_source.rows() {
        return Err(MpaError::Shape(format!(
            "correspondence is {}x{}, prototypes are {} target x {} source",
            a.weights.rows(),
            a.weights.cols(),
            q_target.rows(),
            q_source.rows()
        )));
    }
    let dist = pairwise_sq_dist(q_target, q_source)?;
    Ok(weighted_sum(&a.weights, &dist))
}

fn weighted_sum(w: &Matrix, d: &Matrix) -> f64 {
    w.as_slice()
        .iter()
        .zip(d.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

fn check_probs(probs: &Matrix) -> Result<()> {
    if probs.cols() != NUM_CLASSES {
        return Err(MpaError::Shape(format!(
            "expected {NUM_CLASSES} class columns, got {}",
            probs.cols()
        )));
    }
    Ok(())
}

/// Mean cross-entropy of the true class, probabilities clamped at [`PROB_CLAMP`].
pub fn sup_loss(probs: &Matrix, labels: &[u8]) -> Result<f64> {
    check_probs(probs)?;
    if probs.rows() != labels.len() {
        return Err(MpaError::Shape(format!(
            "{} prediction rows, {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[(i, y as usize)].max(PROB_CLAMP).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean prediction entropy (natural log, `0·ln 0 := 0` via clamping).
pub fn ent_loss(probs: &Matrix) -> Result<f64> {
    check_probs(probs)?;
    let total: f64 = probs.row_iter().map(row_entropy).sum();
    Ok(total / probs.rows() as f64)
}

fn row_entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&v| v * v.max(PROB_CLAMP).ln()).sum::<f64>()
}

fn ensure_finite(value: f64, term: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MpaError::NonFiniteTerm(term))
    }
}

fn add_layers(acc: &mut [Layer], add: &[Layer], scale: f64) {
    for (a, b) in acc.iter_mut().zip(add) {
        for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
            *x += scale * y;
        }
        for (x, y) in a.bias.iter_mut().zip(&b.bias) {
            *x += scale * y;
        }
    }
}

/// Source-only cross-entropy and its gradient. This is the plain supervised
/// model's objective and the `L_sup` part of the full objective.
pub fn supervised_loss_and_grads(
    params: &MlpParams,
    source: &Matrix,
    labels: &[u8],
) -> Result<(f64, MlpParams)> {
    if source.rows() != labels.len() {
        return Err(MpaError::Shape(format!(
            "{} source rows, {} labels",
            source.rows(),
            labels.len()
        )));
    }
    let (r, enc_cache) = params.encode(source)?;
    let (logits, cls_cache) = params.logits(&r)?;
    let probs = softmax_rows(&logits);
    let loss = ensure_finite(sup_loss(&probs, labels)?, "l_sup")?;

    let n = labels.len() as f64;
    let mut d_logits = Matrix::zeros(probs.rows(), NUM_CLASSES);
    for (i, &y) in labels.iter().enumerate() {
        let y = y as usize;
        if probs[(i, y)] > PROB_CLAMP {
            for c in 0..NUM_CLASSES {
                let target = if c == y { 1.0 } else { 0.0 };
                d_logits[(i, c)] = (probs[(i, c)] - target) / n;
            }
        }
    }
    let (classifier, d_r) = params.backward_classifier(&cls_cache, &d_logits)?;
    let (encoder, _) = params.backward_encoder(&enc_cache, &d_r)?;
    Ok((
        loss,
        MlpParams {
            encoder,
            classifier,
            activation: params.activation,
        },
    ))
}

/// Gradient of the mean clamped entropy with respect to the logits.
fn entropy_logit_grad(probs: &Matrix) -> Matrix {
    let n = probs.rows() as f64;
    let mut out = Matrix::zeros(probs.rows(), NUM_CLASSES);
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g: Vec<f64> = p
            .iter()
            .map(|&v| v.max(PROB_CLAMP).ln() + if v > PROB_CLAMP { 1.0 } else { 0.0 })
            .collect();
        let mean_g: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        for c in 0..NUM_CLASSES {
            out[(i, c)] = -p[c] * (g[c] - mean_g) / n;
        }
    }
    out
}

/// Effective pair weights `∂L_proto/∂d[ℓ][k]`, where `d` is the squared distance.
fn proto_pair_weights(a: &CorrespondenceMatrix, dist: &Matrix, through_softmax: bool) -> Matrix {
    if !through_softmax {
        return a.weights.clone();
    }
    let mut w = a.weights.clone();
    for l in 0..w.rows() {
        let expected: f64 = a
            .weights
            .row(l)
            .iter()
            .zip(dist.row(l))
            .map(|(x, y)| x * y)
            .sum();
        for k in 0..w.cols() {
            w[(l, k)] = a.weights[(l, k)] * (1.0 - (dist[(l, k)] - expected) / a.tau);
        }
    }
    w
}

/// Full objective and gradients shaped like `params`.
pub fn total_loss_and_grads(
    params: &MlpParams,
    batch: &TrainingBatch<'_>,
    cfg: &ObjectiveConfig,
) -> Result<(LossBreakdown, MlpParams)> {
    let (l_sup, mut grads) = supervised_loss_and_grads(params, batch.source, batch.source_labels)?;

    // prototype alignment
    let (q_s, cache_s) = params.encode(batch.source_prototypes)?;
    let (q_t, cache_t) = params.encode(batch.target_prototypes)?;
    let dist = pairwise_sq_dist(&q_t, &q_s)?;
    let a = correspondence_from_sq_dist(&dist, cfg.tau);
    let l_proto = ensure_finite(weighted_sum(&a.weights, &dist), "l_proto")?;
    let w = proto_pair_weights(&a, &dist, cfg.differentiate_correspondence);
    let mut d_qt = Matrix::zeros(q_t.rows(), q_t.cols());
    let mut d_qs = Matrix::zeros(q_s.rows(), q_s.cols());
    for l in 0..q_t.rows() {
        for k in 0..q_s.rows() {
            let wk = 2.0 * cfg.alpha * w[(l, k)];
            for c in 0..q_t.cols() {
                let diff = q_t[(l, c)] - q_s[(k, c)];
                d_qt[(l, c)] += wk * diff;
                d_qs[(k, c)] -= wk * diff;
            }
        }
    }
    let (g_t, _) = params.backward_encoder(&cache_t, &d_qt)?;
    let (g_s, _) = params.backward_encoder(&cache_s, &d_qs)?;
    add_layers(&mut grads.encoder, &g_t, 1.0);
    add_layers(&mut grads.encoder, &g_s, 1.0);

    // target entropy
    let (r_t, enc_cache) = params.encode(batch.target)?;
    let (logits, cls_cache) = params.logits(&r_t)?;
    let probs = softmax_rows(&logits);
    let l_ent = ensure_finite(ent_loss(&probs)?, "l_ent")?;
    let mut d_logits = entropy_logit_grad(&probs);
    d_logits
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v *= cfg.beta);
    let (g_cls, d_r) = params.backward_classifier(&cls_cache, &d_logits)?;
    let (g_enc, _) = params.backward_encoder(&enc_cache, &d_r)?;
    add_layers(&mut grads.classifier, &g_cls, 1.0);
    add_layers(&mut grads.encoder, &g_enc, 1.0);

    let breakdown = LossBreakdown::new(l_sup, l_proto, l_ent, cfg.alpha, cfg.beta);
    ensure_finite(breakdown.total, "total")?;
    Ok((breakdown, grads))
}

/// Forward-only evaluation of the objective. With `frozen` set, that matrix
/// replaces the correspondence (the stop-gradient surrogate).
pub fn evaluate_loss(
    params: &MlpParams,
    batch: &TrainingBatch<'_>,
    cfg: &ObjectiveConfig,
    frozen: Option<&Matrix>,
) -> Result<LossBreakdown> {
    let probs_s = params.predict_proba(batch.source)?;
    let l_sup = sup_loss(&probs_s, batch.source_labels)?;
    let q_s = params.encode(batch.source_prototypes)?.0;
    let q_t = params.encode(batch.target_prototypes)?.0;
    let dist = pairwise_sq_dist(&q_t, &q_s)?;
    let l_proto = match frozen {
        Some(a) => weighted_sum(a, &dist),
        None => weighted_sum(&correspondence_from_sq_dist(&dist, cfg.tau).weights, &dist),
    };
    let l_ent = ent_loss(&params.predict_proba(batch.target)?)?;
    Ok(LossBreakdown::new(
        l_sup, l_proto, l_ent, cfg.alpha, cfg.beta,
    ))
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Denominator floor for relative gradient errors.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, GRAD_REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_REL_FLOOR)
}

/// Compares `analytic` against central differences of the objective at
/// `params`. Under stop-gradient the correspondence is frozen at its value
/// for `params`, so the difference quotient sees the same surrogate the
/// analytic gradient differentiates.
pub fn finite_difference_check(
    params: &MlpParams,
    analytic: &MlpParams,
    batch: &TrainingBatch<'_>,
    cfg: &ObjectiveConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let frozen = if cfg.differentiate_correspondence {
        None
    } else {
        let q_s = params.encode(batch.source_prototypes)?.0;
        let q_t = params.encode(batch.target_prototypes)?.0;
        Some(correspondence(&q_t, &q_s, cfg.tau)?.weights)
    };
    let analytic: Vec<f64> = analytic.values().copied().collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_parameter: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: analytic.len(),
    };
    for (idx, &g) in analytic.iter().enumerate() {
        let original = *probe.values().nth(idx).expect("same shape");
        let set = |p: &mut MlpParams, v: f64| *p.values_mut().nth(idx).expect("same shape") = v;
        set(&mut probe, original + step);
        let plus = evaluate_loss(&probe, batch, cfg, frozen.as_ref())?.total;
        set(&mut probe, original - step);
        let minus = evaluate_loss(&probe, batch, cfg, frozen.as_ref())?.total;
        set(&mut probe, original);
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(g, numeric);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = err;
            report.worst_index = idx;
            report.analytic = g;
            report.numeric = numeric;
        }
    }
    report.worst_parameter = params.describe_index(report.worst_index);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation};
    use crate::numerics::SeededRng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn correspondence_single_source_is_one() {
        let a = correspondence(&m(&[&[1.0, 2.0], &[-3.0, 0.0]]), &m(&[&[0.0, 0.0]]), 0.5).unwrap();
        assert_eq!(a.weights.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn correspondence_symmetric_case() {
        let a = correspondence(&m(&[&[0.0]]), &m(&[&[-1.0], &[1.0]]), 1.0).unwrap();
        assert_eq!(a.weights.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn correspondence_known_ratio() {
        // squared distances 0 and ln 4
        let a = correspondence(&m(&[&[0.0]]), &m(&[&[0.0], &[4f64.ln().sqrt()]]), 1.0).unwrap();
        assert!((a.weights[(0, 0)] - 0.8).abs() < 1e-12);
        assert!((a.weights[(0, 1)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn correspondence_rejects_bad_tau() {
        let q = m(&[&[0.0]]);
        assert!(matches!(
            correspondence(&q, &q, 0.0),
            Err(MpaError::Parameter(_))
        ));
        assert!(matches!(
            correspondence(&q, &q, -1.0),
            Err(MpaError::Parameter(_))
        ));
    }

    #[test]
    fn proto_loss_examples() {
        let q = m(&[&[1.0, 1.0]]);
        let a = correspondence(&q, &q, 1.0).unwrap();
        assert_eq!(proto_loss(&q, &q, &a).unwrap(), 0.0);

        let qt = m(&[&[2.0, 0.0]]);
        let qs = m(&[&[0.0, 0.0]]);
        let a = correspondence(&qt, &qs, 1.0).unwrap();
        assert_eq!(proto_loss(&qt, &qs, &a).unwrap(), 4.0);

        let bad = CorrespondenceMatrix {
            weights: Matrix::zeros(2, 2),
            tau: 1.0,
        };
        assert!(matches!(
            proto_loss(&qt, &qs, &bad),
            Err(MpaError::Shape(_))
        ));
    }

    #[test]
    fn proto_loss_matches_triple_loop() {
        let mut rng = SeededRng::new(4);
        let mut rand = |r: usize| {
            let rows: Vec<Vec<f64>> = (0..r)
                .map(|_| (0..3).map(|_| rng.normal()).collect())
                .collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let qt = rand(3);
        let qs = rand(2);
        let a = correspondence(&qt, &qs, 0.7).unwrap();
        let mut naive = 0.0;
        for l in 0..3 {
            for k in 0..2 {
                let mut d = 0.0;
                for c in 0..3 {
                    d += (qt[(l, c)] - qs[(k, c)]).powi(2);
                }
                naive += a.weights[(l, k)] * d;
            }
        }
        assert!((proto_loss(&qt, &qs, &a).unwrap() - naive).abs() < 1e-10);
    }

    #[test]
    fn sup_loss_examples() {
        let perfect = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(sup_loss(&perfect, &[0, 1]).unwrap() < 1e-11);
        let uniform = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!((sup_loss(&uniform, &[0, 1]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let p = m(&[&[0.9, 0.1]]);
        assert!((sup_loss(&p, &[0]).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(matches!(sup_loss(&p, &[0, 1]), Err(MpaError::Shape(_))));
    }

    #[test]
    fn ent_loss_examples() {
        assert_eq!(ent_loss(&m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap(), 0.0);
        assert!((ent_loss(&m(&[&[0.5, 0.5]])).unwrap() - 2f64.ln()).abs() < 1e-15);
        let h = ent_loss(&m(&[&[0.8, 0.2], &[0.8, 0.2]])).unwrap();
        assert!((h - 0.500_402_423_538_188_4).abs() < 1e-12);
    }

    fn small_problem(seed: u64) -> (Matrix, Vec<u8>, Matrix, Matrix, Matrix) {
        let mut rng = SeededRng::new(seed);
        let mut rand = |r: usize| {
            let rows: Vec<Vec<f64>> = (0..r)
                .map(|_| (0..3).map(|_| rng.normal()).collect())
                .collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let zs = rand(10);
        let zt = rand(10);
        let labels = (0..10).map(|i| (i % 2) as u8).collect();
        let ps = zs.select_rows(&[1, 6]);
        let pt = zt.select_rows(&[0, 3]);
        (zs, labels, zt, ps, pt)
    }

    #[test]
    fn zero_weights_reduce_to_supervised() {
        let (zs, ys, zt, ps, pt) = small_problem(1);
        let params = init_params(3, &[5], 4, &mut SeededRng::new(2)).unwrap();
        let batch = TrainingBatch {
            source: &zs,
            source_labels: &ys,
            target: &zt,
            source_prototypes: &ps,
            target_prototypes: &pt,
        };
        let cfg = ObjectiveConfig {
            tau: 1.0,
            alpha: 0.0,
            beta: 0.0,
            differentiate_correspondence: false,
        };
        let (loss, grads) = total_loss_and_grads(&params, &batch, &cfg).unwrap();
        let (sup, sup_grads) = supervised_loss_and_grads(&params, &zs, &ys).unwrap();
        assert_eq!(loss.total, sup);
        assert_eq!(grads, sup_grads);
    }

    #[test]
    fn coincident_prototypes_give_no_alignment_signal() {
        let (zs, ys, zt, _, _) = small_problem(3);
        let mut params = init_params(3, &[], 3, &mut SeededRng::new(2)).unwrap();
        params.encoder[0] = Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let proto = zs.select_rows(&[2]);
        let batch = TrainingBatch {
            source: &zs,
            source_labels: &ys,
            target: &zt,
            source_prototypes: &proto,
            target_prototypes: &proto,
        };
        let off = ObjectiveConfig {
            tau: 1.0,
            alpha: 0.0,
            beta: 0.5,
            differentiate_correspondence: false,
        };
        let on = ObjectiveConfig { alpha: 1.0, ..off };
        let (l_on, g_on) = total_loss_and_grads(&params, &batch, &on).unwrap();
        let (_, g_off) = total_loss_and_grads(&params, &batch, &off).unwrap();
        assert_eq!(l_on.l_proto, 0.0);
        assert_eq!(g_on, g_off);
        assert_eq!(g_on.activation, Activation::Tanh);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (zs, ys, zt, ps, pt) = small_problem(5);
        let params = init_params(3, &[5], 4, &mut SeededRng::new(9)).unwrap();
        let batch = TrainingBatch {
            source: &zs,
            source_labels: &ys,
            target: &zt,
            source_prototypes: &ps,
            target_prototypes: &pt,
        };
        for through in [false, true] {
            let cfg = ObjectiveConfig {
                tau: 0.5,
                alpha: 0.3,
                beta: 0.7,
                differentiate_correspondence: through,
            };
            let (_, grads) = total_loss_and_grads(&params, &batch, &cfg).unwrap();
            let report = finite_difference_check(&params, &grads, &batch, &cfg, 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (zs, ys, zt, ps, pt) = small_problem(6);
        let params = init_params(3, &[5], 4, &mut SeededRng::new(1)).unwrap();
        let batch = TrainingBatch {
            source: &zs,
            source_labels: &ys,
            target: &zt,
            source_prototypes: &ps,
            target_prototypes: &pt,
        };
        let cfg = ObjectiveConfig {
            tau: 1.0,
            alpha: 0.1,
            beta: 0.1,
            differentiate_correspondence: false,
        };
        let (_, mut grads) = total_loss_and_grads(&params, &batch, &cfg).unwrap();
        *grads.values_mut().nth(3).unwrap() += 0.05;
        let report = finite_difference_check(&params, &grads, &batch, &cfg, 1e-5).unwrap();
        assert!(report.max_rel_error > 1e-4);
        assert_eq!(report.worst_index, 3);
    }
}
