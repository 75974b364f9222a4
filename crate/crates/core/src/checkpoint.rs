//! Bit-exact text checkpoint of a [`TrainedModel`].
//!
//! ```text
//! mpa-checkpoint 1
//! activation tanh
//! <name> f64 <rows> <cols> <16-hex-digit IEEE-754 bit patterns…>
//! <name> u64 <rows> <cols> <decimal integers…>
//! ```
//!
//! One array per line, values row-major and space separated. Encoder and
//! classifier layers are stored as `encoder.<i>.weight` (fan_in × fan_out)
//! and `encoder.<i>.bias` (1 × fan_out), likewise for `classifier.<i>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{MpaError, Result};
use crate::medoids::MedoidSet;
use crate::model::{Activation, Layer, MlpParams};
use crate::numerics::{Matrix, PcaProjection, StandardScaler};
use crate::objective::LossBreakdown;
use crate::pipeline::TrainedModel;

pub const MAGIC: &str = "mpa-checkpoint";
pub const VERSION: u32 = 1;

fn put_f64(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    let _ = write!(out, "{name} f64 {rows} {cols}");
    for v in values {
        let _ = write!(out, " {:016x}", v.to_bits());
    }
    out.push('\n');
}

fn put_u64(out: &mut String, name: &str, values: &[usize]) {
    let _ = write!(out, "{name} u64 1 {}", values.len());
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

fn put_matrix(out: &mut String, name: &str, m: &Matrix) {
    put_f64(out, name, m.rows(), m.cols(), m.as_slice());
}

fn put_vec(out: &mut String, name: &str, v: &[f64]) {
    put_f64(out, name, 1, v.len(), v);
}

fn put_layers(out: &mut String, prefix: &str, layers: &[Layer]) {
    for (i, l) in layers.iter().enumerate() {
        put_matrix(out, &format!("{prefix}.{i}.weight"), &l.weight);
        put_vec(out, &format!("{prefix}.{i}.bias"), &l.bias);
    }
}

fn put_medoids(out: &mut String, prefix: &str, m: &MedoidSet) {
    put_u64(out, &format!("{prefix}.indices"), &m.medoid_indices);
    put_matrix(out, &format!("{prefix}.points"), &m.medoid_points);
    put_u64(out, &format!("{prefix}.assignments"), &m.assignments);
    put_vec(out, &format!("{prefix}.total_cost"), &[m.total_cost]);
}

pub fn to_string(model: &TrainedModel) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    out.push_str(match model.params.activation {
        Activation::Tanh => "activation tanh\n",
    });
    for (name, s) in [
        ("scaler_source", &model.scaler_source),
        ("scaler_target", &model.scaler_target),
    ] {
        put_vec(&mut out, &format!("{name}.means"), &s.means);
        put_vec(&mut out, &format!("{name}.stds"), &s.stds);
    }
    for (name, p) in [
        ("pca_source", &model.pca_source),
        ("pca_target", &model.pca_target),
    ] {
        put_vec(&mut out, &format!("{name}.mean"), &p.mean);
        put_matrix(&mut out, &format!("{name}.components"), &p.components);
        put_vec(
            &mut out,
            &format!("{name}.explained_variance"),
            &p.explained_variance,
        );
    }
    put_medoids(&mut out, "prototypes_source", &model.prototypes_source);
    put_medoids(&mut out, "prototypes_target", &model.prototypes_target);
    put_layers(&mut out, "encoder", &model.params.encoder);
    put_layers(&mut out, "classifier", &model.params.classifier);
    let history: Vec<f64> = model
        .loss_history
        .iter()
        .flat_map(|l| [l.l_sup, l.l_proto, l.l_ent, l.total, l.alpha, l.beta])
        .collect();
    put_f64(
        &mut out,
        "loss_history",
        model.loss_history.len(),
        6,
        &history,
    );
    put_matrix(
        &mut out,
        "target_probabilities",
        &model.target_probabilities,
    );
    out
}

enum Array {
    Real {
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    },
    Index(Vec<usize>),
}

struct Reader {
    arrays: BTreeMap<String, Array>,
}

fn err(msg: impl Into<String>) -> MpaError {
    MpaError::Checkpoint(msg.into())
}

impl Reader {
    fn take(&mut self, name: &str) -> Result<Array> {
        self.arrays
            .remove(name)
            .ok_or_else(|| err(format!("missing array '{name}'")))
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        match self.take(name)? {
            Array::Real { rows, cols, values } => Matrix::from_vec(rows, cols, values),
            Array::Index(_) => Err(err(format!("'{name}' should be f64"))),
        }
    }

    fn vec(&mut self, name: &str) -> Result<Vec<f64>> {
        let m = self.matrix(name)?;
        if m.rows() != 1 {
            return Err(err(format!("'{name}' should have one row")));
        }
        Ok(m.into_vec())
    }

    fn indices(&mut self, name: &str) -> Result<Vec<usize>> {
        match self.take(name)? {
            Array::Index(v) => Ok(v),
            Array::Real { .. } => Err(err(format!("'{name}' should be u64"))),
        }
    }

    fn layers(&mut self, prefix: &str) -> Result<Vec<Layer>> {
        let mut layers = Vec::new();
        while self
            .arrays
            .contains_key(&format!("{prefix}.{}.weight", layers.len()))
        {
            let i = layers.len();
            let weight = self.matrix(&format!("{prefix}.{i}.weight"))?;
            let bias = self.vec(&format!("{prefix}.{i}.bias"))?;
            layers.push(Layer { weight, bias });
        }
        Ok(layers)
    }

    fn medoids(&mut self, prefix: &str) -> Result<MedoidSet> {
        let medoid_indices = self.indices(&format!("{prefix}.indices"))?;
        let medoid_points = self.matrix(&format!("{prefix}.points"))?;
        let assignments = self.indices(&format!("{prefix}.assignments"))?;
        let total_cost = self.vec(&format!("{prefix}.total_cost"))?;
        let total_cost = *total_cost.first().ok_or_else(|| err("empty total_cost"))?;
        Ok(MedoidSet {
            medoid_indices,
            medoid_points,
            assignments,
            total_cost,
        })
    }
}

pub fn from_str(text: &str) -> Result<TrainedModel> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty checkpoint"))?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(err(format!("unsupported header '{header}'")));
    }
    let mut activation = None;
    let mut arrays = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let mut parts = line.split_ascii_whitespace();
        let name = match parts.next() {
            Some(name) => name.to_string(),
            None => continue,
        };
        if name == "activation" {
            activation = match parts.next() {
                Some("tanh") => Some(Activation::Tanh),
                other => return Err(err(format!("line {lineno}: unknown activation {other:?}"))),
            };
            continue;
        }
        let kind = parts
            .next()
            .ok_or_else(|| err(format!("line {lineno}: missing type")))?;
        let mut dim = || -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(format!("line {lineno}: bad dimensions")))
        };
        let (rows, cols) = (dim()?, dim()?);
        let raw: Vec<&str> = parts.collect();
        if raw.len() != rows * cols {
            return Err(err(format!(
                "line {lineno}: '{name}' holds {} values, expected {}",
                raw.len(),
                rows * cols
            )));
        }
        let array = match kind {
            "f64" => Array::Real {
                rows,
                cols,
                values: raw
                    .iter()
                    .map(|s| u64::from_str_radix(s, 16).map(f64::from_bits))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(format!("line {lineno}: {e}")))?,
            },
            "u64" => Array::Index(
                raw.iter()
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(format!("line {lineno}: {e}")))?,
            ),
            other => return Err(err(format!("line {lineno}: unknown type '{other}'"))),
        };
        if arrays.insert(name.clone(), array).is_some() {
            return Err(err(format!("duplicate array '{name}'")));
        }
    }
    let activation = activation.ok_or_else(|| err("missing activation"))?;
    let mut r = Reader { arrays };

    let scaler = |r: &mut Reader, p: &str| -> Result<StandardScaler> {
        Ok(StandardScaler {
            means: r.vec(&format!("{p}.means"))?,
            stds: r.vec(&format!("{p}.stds"))?,
        })
    };
    let pca = |r: &mut Reader, p: &str| -> Result<PcaProjection> {
        Ok(PcaProjection {
            mean: r.vec(&format!("{p}.mean"))?,
            components: r.matrix(&format!("{p}.components"))?,
            explained_variance: r.vec(&format!("{p}.explained_variance"))?,
        })
    };
    let scaler_source = scaler(&mut r, "scaler_source")?;
    let scaler_target = scaler(&mut r, "scaler_target")?;
    let pca_source = pca(&mut r, "pca_source")?;
    let pca_target = pca(&mut r, "pca_target")?;
    let prototypes_source = r.medoids("prototypes_source")?;
    let prototypes_target = r.medoids("prototypes_target")?;
    let params = MlpParams {
        encoder: r.layers("encoder")?,
        classifier: r.layers("classifier")?,
        activation,
    };
    params.validate()?;
    let history = r.matrix("loss_history")?;
    if history.cols() != 6 {
        return Err(err("loss_history must have 6 columns"));
    }
    let loss_history = history
        .row_iter()
        .map(|v| LossBreakdown {
            l_sup: v[0],
            l_proto: v[1],
            l_ent: v[2],
            total: v[3],
            alpha: v[4],
            beta: v[5],
        })
        .collect();
    let target_probabilities = r.matrix("target_probabilities")?;
    if let Some(extra) = r.arrays.keys().next() {
        return Err(err(format!("unexpected array '{extra}'")));
    }
    Ok(TrainedModel {
        scaler_source,
        scaler_target,
        pca_source,
        pca_target,
        prototypes_source,
        prototypes_target,
        params,
        loss_history,
        target_probabilities,
    })
}

pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_domain_pair, SynthSpec};
    use crate::pipeline::{run_mpa, HyperParams};

    fn trained() -> TrainedModel {
        let spec = SynthSpec {
            n_source: 60,
            n_target: 50,
            d_source: 5,
            d_target: 4,
            seed: 1,
            ..SynthSpec::default()
        };
        let p = synth_domain_pair(&spec).unwrap();
        let h = HyperParams {
            d: 3,
            k_source: 3,
            k_target: 3,
            epochs: 5,
            hidden: vec![4],
            latent: 3,
            ..HyperParams::default()
        };
        run_mpa(&p.source, &p.target, &h).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = trained();
        let text = to_string(&m);
        let back = from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn rejects_corruption() {
        let text = to_string(&trained());
        assert!(from_str("nonsense 1\n").is_err());
        let truncated: String = text
            .lines()
            .filter(|l| !l.starts_with("encoder.0.bias"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(from_str(&truncated), Err(MpaError::Checkpoint(_))));
        let dup = format!("{text}scaler_source.stds f64 1 1 0000000000000000\n");
        assert!(matches!(from_str(&dup), Err(MpaError::Checkpoint(_))));
    }
}
