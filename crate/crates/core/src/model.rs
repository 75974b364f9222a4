//! Fully-connected encoder and two-class classifier head with explicit
//! forward and backward passes.
//!
//! Layers compute `x·W + b` with `W` stored as `fan_in × fan_out`. Every
//! layer except the last of each stack is followed by `tanh`; the encoder's
//! last layer is linear (unbounded latent space) and the classifier's last
//! layer produces the two logits.

use serde::{Deserialize, Serialize};

use crate::error::{MpaError, Result};
use crate::numerics::{Matrix, SeededRng};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// Encoder and classifier parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub encoder: Vec<Layer>,
    pub classifier: Vec<Layer>,
    pub activation: Activation,
}

/// Layer inputs and (activated) outputs recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

fn glorot_layer(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Layer {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Layer {
        weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
        bias: vec![0.0; fan_out],
    }
}

/// Glorot-uniform weights and zero biases. The encoder maps
/// `d_in → hidden… → latent`; the classifier maps `latent → 2`.
pub fn init_params(
    d_in: usize,
    hidden: &[usize],
    latent: usize,
    rng: &mut SeededRng,
) -> Result<MlpParams> {
    if d_in == 0 || latent == 0 || hidden.contains(&0) {
        return Err(MpaError::Dimension(format!(
            "layer widths must be positive (input {d_in}, hidden {hidden:?}, latent {latent})"
        )));
    }
    let mut widths = vec![d_in];
    widths.extend_from_slice(hidden);
    widths.push(latent);
    let encoder = widths
        .windows(2)
        .map(|w| glorot_layer(w[0], w[1], rng))
        .collect();
    let classifier = vec![glorot_layer(latent, NUM_CLASSES, rng)];
    Ok(MlpParams {
        encoder,
        classifier,
        activation: Activation::Tanh,
    })
}

fn forward_stack(layers: &[Layer], x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut outputs = Vec::with_capacity(layers.len());
    let mut current = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        if current.cols() != layer.fan_in() {
            return Err(MpaError::Shape(format!(
                "layer {l} expects {} inputs, got {}",
                layer.fan_in(),
                current.cols()
            )));
        }
        let mut out = layer.affine(&current)?;
        if l + 1 < layers.len() {
            out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        }
        inputs.push(current);
        outputs.push(out.clone());
        current = out;
    }
    Ok((current, ForwardCache { inputs, outputs }))
}

/// Backpropagates `d_out` through a stack, returning layer gradients and the
/// gradient with respect to the stack input.
fn backward_stack(
    layers: &[Layer],
    cache: &ForwardCache,
    d_out: &Matrix,
) -> Result<(Vec<Layer>, Matrix)> {
    let mut grads: Vec<Layer> = Vec::with_capacity(layers.len());
    let mut delta = d_out.clone();
    for l in (0..layers.len()).rev() {
        if l + 1 < layers.len() {
            for (d, a) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(cache.outputs[l].as_slice())
            {
                *d *= 1.0 - a * a;
            }
        }
        let weight = cache.inputs[l].t_matmul(&delta)?;
        let mut bias = vec![0.0; layers[l].fan_out()];
        for r in delta.row_iter() {
            for (b, d) in bias.iter_mut().zip(r) {
                *b += d;
            }
        }
        let d_input = delta.matmul_t(&layers[l].weight)?;
        grads.push(Layer { weight, bias });
        delta = d_input;
    }
    grads.reverse();
    Ok((grads, delta))
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(0, Layer::fan_in)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().map_or(0, Layer::fan_out)
    }

    pub fn zeros_like(&self) -> MlpParams {
        let z = |ls: &[Layer]| {
            ls.iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect()
        };
        MlpParams {
            encoder: z(&self.encoder),
            classifier: z(&self.classifier),
            activation: self.activation,
        }
    }

    /// Checks the layer chain and finiteness of every parameter.
    pub fn validate(&self) -> Result<()> {
        let all: Vec<&Layer> = self.encoder.iter().chain(&self.classifier).collect();
        if self.encoder.is_empty() || self.classifier.is_empty() {
            return Err(MpaError::Dimension(
                "encoder and classifier need at least one layer".into(),
            ));
        }
        for w in all.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(MpaError::Dimension(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].fan_out(),
                    w[1].fan_in()
                )));
            }
        }
        if all.iter().any(|l| l.bias.len() != l.fan_out()) {
            return Err(MpaError::Dimension(
                "bias length differs from layer width".into(),
            ));
        }
        if self.classifier.last().map(Layer::fan_out) != Some(NUM_CLASSES) {
            return Err(MpaError::Dimension(
                "classifier must output two logits".into(),
            ));
        }
        if !self.values().all(|v| v.is_finite()) {
            return Err(MpaError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Every parameter in a fixed order: encoder then classifier, each layer
    /// weight (row-major) then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.encoder
            .iter()
            .chain(&self.classifier)
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.encoder
            .iter_mut()
            .chain(self.classifier.iter_mut())
            .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn num_values(&self) -> usize {
        self.values().count()
    }

    /// Human-readable location of the `index`-th value in [`MlpParams::values`] order.
    pub fn describe_index(&self, mut index: usize) -> String {
        let stacks = [("encoder", &self.encoder), ("classifier", &self.classifier)];
        for (name, layers) in stacks {
            for (l, layer) in layers.iter().enumerate() {
                let nw = layer.weight.as_slice().len();
                if index < nw {
                    let (r, c) = (index / layer.fan_out(), index % layer.fan_out());
                    return format!("{name}[{l}].weight[{r},{c}]");
                }
                index -= nw;
                if index < layer.bias.len() {
                    return format!("{name}[{l}].bias[{index}]");
                }
                index -= layer.bias.len();
            }
        }
        "out of range".into()
    }

    /// `self += scale · other`, for same-shaped parameter sets.
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn encode(&self, z: &Matrix) -> Result<(Matrix, ForwardCache)> {
        forward_stack(&self.encoder, z)
    }

    pub fn logits(&self, r: &Matrix) -> Result<(Matrix, ForwardCache)> {
        forward_stack(&self.classifier, r)
    }

    /// Row-wise class probabilities for latent codes `r`.
    pub fn classify(&self, r: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.logits(r)?.0))
    }

    /// `classify(encode(z))`
    pub fn predict_proba(&self, z: &Matrix) -> Result<Matrix> {
        self.classify(&self.encode(z)?.0)
    }

    pub fn backward_encoder(
        &self,
        cache: &ForwardCache,
        d_out: &Matrix,
    ) -> Result<(Vec<Layer>, Matrix)> {
        backward_stack(&self.encoder, cache, d_out)
    }

    pub fn backward_classifier(
        &self,
        cache: &ForwardCache,
        d_logits: &Matrix,
    ) -> Result<(Vec<Layer>, Matrix)> {
        backward_stack(&self.classifier, cache, d_logits)
    }
}

/// Numerically stable row-wise softmax (row max subtracted before `exp`).
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_identity(d: usize) -> MlpParams {
        MlpParams {
            encoder: vec![Layer {
                weight: Matrix::identity(d),
                bias: vec![0.0; d],
            }],
            classifier: vec![Layer::zeros(d, NUM_CLASSES)],
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn init_is_deterministic_and_chained() {
        let a = init_params(6, &[16], 8, &mut SeededRng::new(1)).unwrap();
        let b = init_params(6, &[16], 8, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.input_dim(), 6);
        assert_eq!(a.latent_dim(), 8);
        assert!(a.values().any(|v| *v != 0.0));
    }

    #[test]
    fn linear_encoder_is_allowed() {
        let p = init_params(3, &[], 3, &mut SeededRng::new(2)).unwrap();
        assert_eq!(p.encoder.len(), 1);
        p.validate().unwrap();
    }

    #[test]
    fn zero_width_rejected() {
        assert!(matches!(
            init_params(0, &[], 3, &mut SeededRng::new(0)),
            Err(MpaError::Dimension(_))
        ));
        assert!(matches!(
            init_params(3, &[0], 3, &mut SeededRng::new(0)),
            Err(MpaError::Dimension(_))
        ));
    }

    #[test]
    fn glorot_weights_are_centered() {
        // 100x100 layer: 10,000 draws from U(-l, l) with l = sqrt(6/200)
        let p = init_params(100, &[], 100, &mut SeededRng::new(7)).unwrap();
        let w = p.encoder[0].weight.as_slice();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let limit = (6.0f64 / 200.0).sqrt();
        let se = limit / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
        assert!(w.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn encode_examples() {
        let z = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let mut p = init_params(2, &[4], 2, &mut SeededRng::new(3)).unwrap();
        p.values_mut().for_each(|v| *v = 0.0);
        assert!(p.encode(&z).unwrap().0.as_slice().iter().all(|v| *v == 0.0));

        let id = linear_identity(2);
        assert_eq!(id.encode(&z).unwrap().0, z);
        assert!(matches!(
            id.encode(&Matrix::zeros(1, 3)),
            Err(MpaError::Shape(_))
        ));
    }

    #[test]
    fn classify_examples() {
        let p = linear_identity(2);
        let probs = p
            .classify(&Matrix::from_rows(&[[0.3, 0.3]]).unwrap())
            .unwrap();
        assert_eq!(probs.as_slice(), &[0.5, 0.5]);

        let s = softmax_rows(&Matrix::from_rows(&[[1000.0, 0.0]]).unwrap());
        assert_eq!(s[(0, 0)], 1.0);
        assert!(s[(0, 1)] >= 0.0 && s[(0, 1)] < 1e-300);

        let base = Matrix::from_rows(&[[0.7, -1.3]]).unwrap();
        let shifted = Matrix::from_rows(&[[0.7 + 41.0, -1.3 + 41.0]]).unwrap();
        let (a, b) = (softmax_rows(&base), softmax_rows(&shifted));
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(
            p.classify(&Matrix::zeros(1, 5)),
            Err(MpaError::Shape(_))
        ));
    }

    #[test]
    fn describe_index_walks_layers() {
        let p = init_params(2, &[], 3, &mut SeededRng::new(0)).unwrap();
        assert_eq!(p.describe_index(0), "encoder[0].weight[0,0]");
        assert_eq!(p.describe_index(6), "encoder[0].bias[0]");
        assert_eq!(p.describe_index(9), "classifier[0].weight[0,0]");
        assert_eq!(p.num_values(), 9 + 8);
    }
}
