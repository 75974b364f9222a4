//! Domain datasets: CSV ingestion, stratified splitting and a synthetic
//! two-domain generator.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MpaError, Result};
use crate::numerics::{Matrix, SeededRng};

/// Feature matrix with optional binary labels (1 = attack, 0 = normal).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub features: Matrix,
    pub labels: Option<Vec<u8>>,
    pub domain_tag: String,
}

impl DomainDataset {
    pub fn new(
        features: Matrix,
        labels: Option<Vec<u8>>,
        domain_tag: impl Into<String>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(MpaError::Shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(MpaError::Label("labels must be 0 or 1".into()));
            }
        }
        if !features.is_finite() {
            return Err(MpaError::InvalidData("non-finite feature value".into()));
        }
        Ok(DomainDataset {
            features,
            labels,
            domain_tag: domain_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Labels, or a label error naming the domain.
    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| MpaError::Label(format!("dataset '{}' has no labels", self.domain_tag)))
    }

    fn subset(&self, idx: &[usize]) -> DomainDataset {
        DomainDataset {
            features: self.features.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            domain_tag: self.domain_tag.clone(),
        }
    }
}

/// Reads a header-first numeric CSV. When `label_column` is given that column
/// becomes the labels and must hold exactly `0` or `1`.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<DomainDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, label_column, tag)
}

pub fn read_csv<R: Read>(
    reader: R,
    label_column: Option<&str>,
    domain_tag: impl Into<String>,
) -> Result<DomainDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MpaError::Schema(e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(MpaError::Schema("missing header row".into()));
    }
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| MpaError::Schema(format!("label column '{name}' not found")))?,
        ),
        None => None,
    };
    let n_features = headers.len() - usize::from(label_idx.is_some());
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| MpaError::Schema(format!("line {line}: {e}")))?;
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == label_idx {
                labels.push(match cell {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(MpaError::Parse {
                            row: line,
                            col: c + 1,
                            msg: format!("label '{other}' is not 0 or 1"),
                        })
                    }
                });
            } else {
                let v: f64 = cell.parse().map_err(|_| MpaError::Parse {
                    row: line,
                    col: c + 1,
                    msg: format!("'{cell}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(MpaError::Parse {
                        row: line,
                        col: c + 1,
                        msg: "non-finite value".into(),
                    });
                }
                values.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(MpaError::Schema("no data rows".into()));
    }
    let features = Matrix::from_vec(rows, n_features, values)?;
    DomainDataset::new(features, label_idx.map(|_| labels), domain_tag)
}

/// Shortest text that parses back to the identical `f64` (17 significant digits).
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes features as `f0,f1,…` plus a trailing `label` column when labels exist.
pub fn write_csv<W: Write>(ds: &DomainDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds
            .features
            .row(i)
            .iter()
            .map(|v| format_value(*v))
            .collect();
        if let Some(l) = &ds.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}

/// Single-column `label` CSV.
pub fn write_labels<W: Write>(labels: &[u8], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label"]).map_err(csv_io)?;
    for l in labels {
        w.write_record([l.to_string()]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let ds = load_csv(path, Some("label"))?;
    if ds.dim() != 0 {
        return Err(MpaError::Schema(
            "label file must contain only a 'label' column".into(),
        ));
    }
    Ok(ds.labels.unwrap_or_default())
}

fn csv_io(e: csv::Error) -> MpaError {
    MpaError::Io(std::io::Error::other(e))
}

/// Stratified split: `fraction` of every class goes to the first part.
/// Rows keep their original relative order inside each part.
pub fn split(
    ds: &DomainDataset,
    fraction: f64,
    rng: &mut SeededRng,
) -> Result<(DomainDataset, DomainDataset)> {
    let n = ds.len();
    if n < 2 {
        return Err(MpaError::DegenerateInput(format!("cannot split {n} rows")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MpaError::Parameter(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    let groups: Vec<Vec<usize>> = match &ds.labels {
        Some(l) => (0..=1u8)
            .map(|c| (0..n).filter(|&i| l[i] == c).collect())
            .collect(),
        None => vec![(0..n).collect()],
    };
    let want = (fraction * n as f64).round() as usize;
    if want == 0 || want == n {
        return Err(MpaError::Parameter(format!(
            "fraction {fraction} leaves one side of {n} rows empty"
        )));
    }
    // largest-remainder allocation so the first part has exactly `want` rows
    let mut take: Vec<usize> = groups
        .iter()
        .map(|g| (fraction * g.len() as f64).floor() as usize)
        .collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let rem = |g: usize| fraction * groups[g].len() as f64 - take[g] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)));
    let mut missing = want.saturating_sub(take.iter().sum());
    for &g in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if take[g] < groups[g].len() {
            take[g] += 1;
            missing -= 1;
        }
    }
    let mut first = Vec::with_capacity(want);
    let mut second = Vec::with_capacity(n - want);
    for (g, members) in groups.iter().enumerate() {
        let mut shuffled = members.clone();
        rng.shuffle(&mut shuffled);
        first.extend_from_slice(&shuffled[..take[g]]);
        second.extend_from_slice(&shuffled[take[g]..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((ds.subset(&first), ds.subset(&second)))
}

/// Parameters of the synthetic source/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub d_source: usize,
    pub d_target: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Probability of the attack class.
    pub class_balance: f64,
    pub shift_rotation_deg: f64,
    pub shift_scale: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            d_source: 12,
            d_target: 9,
            n_source: 1000,
            n_target: 1000,
            class_balance: 0.5,
            shift_rotation_deg: 35.0,
            shift_scale: 1.4,
            noise_std: 0.3,
            seed: 0,
        }
    }
}

/// Distance between the two class means of the latent mixture.
pub const CLASS_SEPARATION: f64 = 4.0;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(MpaError::Parameter(format!("{field}: {why}")));
        if self.d_source < 2 {
            return bad("d_source", "must be at least 2");
        }
        if self.d_target < 2 {
            return bad("d_target", "must be at least 2");
        }
        if self.n_source < 4 {
            return bad("n_source", "must be at least 4");
        }
        if self.n_target < 4 {
            return bad("n_target", "must be at least 4");
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return bad("class_balance", "must lie in (0, 1)");
        }
        if !self.shift_rotation_deg.is_finite() {
            return bad("shift_rotation_deg", "must be finite");
        }
        if !(self.shift_scale > 0.0 && self.shift_scale.is_finite()) {
            return bad("shift_scale", "must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std", "must be nonnegative");
        }
        Ok(())
    }
}

/// Generated source/target pair. Target labels are kept apart from the
/// target dataset, which never carries labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub source: DomainDataset,
    pub target: DomainDataset,
    pub hidden_target_labels: Vec<u8>,
}

/// Gram-Schmidt on random Gaussian vectors: `count` orthonormal vectors in R^dim.
fn orthonormal_set(rng: &mut SeededRng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Two-class Gaussian mixture in `d_source` dimensions (identity covariance,
/// class means [`CLASS_SEPARATION`] apart along a random direction). The
/// target reuses the same latent draws, rotated by `shift_rotation_deg` in
/// the plane of the class direction and a random orthogonal direction,
/// scaled by `shift_scale`, embedded into `d_target` dimensions by a random
/// orthonormal map and perturbed with isotropic Gaussian noise.
pub fn synth_domain_pair(spec: &SynthSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed);
    let mut geo = root.fork(1);
    let mut draws = root.fork(2);
    let mut noise = root.fork(3);

    let latent = spec.d_source;
    let basis = orthonormal_set(&mut geo, 2, latent);
    let (u, v) = (&basis[0], &basis[1]);
    // rows of the embedding are orthonormal when d_target <= latent,
    // columns otherwise
    let embed: Vec<Vec<f64>> = if spec.d_target <= latent {
        orthonormal_set(&mut geo, spec.d_target, latent)
    } else {
        let cols = orthonormal_set(&mut geo, latent, spec.d_target);
        (0..spec.d_target)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect()
    };
    let theta = spec.shift_rotation_deg.to_radians();
    let (cos, sin) = (theta.cos(), theta.sin());

    let n = spec.n_source.max(spec.n_target);
    let mut labels = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(draws.next_f64() < spec.class_balance);
        let offset = (f64::from(y) - 0.5) * CLASS_SEPARATION;
        let x: Vec<f64> = u.iter().map(|ui| offset * ui + draws.normal()).collect();
        labels.push(y);
        points.push(x);
    }

    let mut source_values = Vec::with_capacity(spec.n_source * latent);
    for x in &points[..spec.n_source] {
        source_values.extend_from_slice(x);
    }

    let mut target_values = Vec::with_capacity(spec.n_target * spec.d_target);
    for x in &points[..spec.n_target] {
        // rotate the (u, v) components, then scale
        let a: f64 = x.iter().zip(u).map(|(p, q)| p * q).sum();
        let b: f64 = x.iter().zip(v).map(|(p, q)| p * q).sum();
        let (ra, rb) = (cos * a - sin * b, sin * a + cos * b);
        let shifted: Vec<f64> = (0..latent)
            .map(|k| spec.shift_scale * (x[k] + (ra - a) * u[k] + (rb - b) * v[k]))
            .collect();
        for row in &embed {
            let val: f64 = row.iter().zip(&shifted).map(|(e, s)| e * s).sum();
            let eps = if spec.noise_std > 0.0 {
                spec.noise_std * noise.normal()
            } else {
                0.0
            };
            target_values.push(val + eps);
        }
    }

    let source = DomainDataset::new(
        Matrix::from_vec(spec.n_source, latent, source_values)?,
        Some(labels[..spec.n_source].to_vec()),
        "source",
    )?;
    let target = DomainDataset::new(
        Matrix::from_vec(spec.n_target, spec.d_target, target_values)?,
        None,
        "target",
    )?;
    Ok(SyntheticPair {
        source,
        target,
        hidden_target_labels: labels[..spec.n_target].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pairwise_sq_dist;

    const SAMPLE: &str = "a,b,label\n1,2,0\n3,4,1\n";

    #[test]
    fn reads_labeled_and_unlabeled() {
        let ds = read_csv(SAMPLE.as_bytes(), Some("label"), "s").unwrap();
        assert_eq!(
            ds.features,
            Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()
        );
        assert_eq!(ds.labels, Some(vec![0, 1]));
        let ds = read_csv(SAMPLE.as_bytes(), None, "s").unwrap();
        assert_eq!(ds.dim(), 3);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read_csv(SAMPLE.as_bytes(), Some("y"), "s"),
            Err(MpaError::Schema(_))
        ));
        assert!(matches!(
            read_csv("".as_bytes(), None, "s"),
            Err(MpaError::Schema(_))
        ));
        assert!(matches!(
            read_csv("a,b\n".as_bytes(), None, "s"),
            Err(MpaError::Schema(_))
        ));
        match read_csv("a,b\n1,2\n3,x\n".as_bytes(), None, "s") {
            Err(MpaError::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_csv("a,label\n1,2\n".as_bytes(), Some("label"), "s"),
            Err(MpaError::Parse { .. })
        ));
        assert!(read_csv("a,b\n1e-3,-2.5E2\n".as_bytes(), None, "s").is_ok());
    }

    #[test]
    fn split_is_stratified_and_exhaustive() {
        let features = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let ds = DomainDataset::new(features, Some(labels), "d").unwrap();
        let (a, b) = split(&ds, 0.5, &mut SeededRng::new(1)).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        for part in [&a, &b] {
            let ones = part
                .labels
                .as_ref()
                .unwrap()
                .iter()
                .filter(|&&l| l == 1)
                .count();
            assert!((2..=3).contains(&ones));
        }
        let mut all: Vec<f64> = a
            .features
            .as_slice()
            .iter()
            .chain(b.features.as_slice())
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());

        let (a2, _) = split(&ds, 0.5, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, a2);
        let (a3, _) = split(&ds, 0.5, &mut SeededRng::new(2)).unwrap();
        let count = |d: &DomainDataset| {
            d.labels
                .as_ref()
                .unwrap()
                .iter()
                .filter(|&&l| l == 1)
                .count()
        };
        assert_eq!(count(&a), count(&a3));
    }

    #[test]
    fn split_rejects_empty_side() {
        let ds = DomainDataset::new(Matrix::zeros(3, 1), None, "d").unwrap();
        assert!(matches!(
            split(&ds, 0.1, &mut SeededRng::new(0)),
            Err(MpaError::Parameter(_))
        ));
        assert!(matches!(
            split(&ds, 1.0, &mut SeededRng::new(0)),
            Err(MpaError::Parameter(_))
        ));
    }

    #[test]
    fn isometric_pair_preserves_distances() {
        let spec = SynthSpec {
            d_source: 5,
            d_target: 5,
            n_source: 30,
            n_target: 30,
            shift_rotation_deg: 0.0,
            shift_scale: 1.0,
            noise_std: 0.0,
            ..SynthSpec::default()
        };
        let pair = synth_domain_pair(&spec).unwrap();
        let ds = pairwise_sq_dist(&pair.source.features, &pair.source.features).unwrap();
        let dt = pairwise_sq_dist(&pair.target.features, &pair.target.features).unwrap();
        for (a, b) in ds.as_slice().iter().zip(dt.as_slice()) {
            assert!((a.sqrt() - b.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn generator_balance_and_determinism() {
        let spec = SynthSpec {
            n_source: 1000,
            seed: 17,
            ..SynthSpec::default()
        };
        let a = synth_domain_pair(&spec).unwrap();
        let mean = a
            .source
            .labels
            .as_ref()
            .unwrap()
            .iter()
            .map(|&l| f64::from(l))
            .sum::<f64>()
            / 1000.0;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
        assert_eq!(a, synth_domain_pair(&spec).unwrap());
        assert!(a.target.labels.is_none());
        assert_eq!(a.target.dim(), 9);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = SynthSpec {
            d_target: 1,
            ..SynthSpec::default()
        };
        assert!(matches!(
            synth_domain_pair(&spec),
            Err(MpaError::Parameter(_))
        ));
        let spec = SynthSpec {
            class_balance: 1.0,
            ..SynthSpec::default()
        };
        assert!(matches!(
            synth_domain_pair(&spec),
            Err(MpaError::Parameter(_))
        ));
    }
}
