use mpa_core::data::{load_csv, read_csv, save_csv, write_csv, DomainDataset};
use mpa_core::eval::{knn_predict, GaussianNb};
use mpa_core::model::init_params;
use mpa_core::numerics::{Matrix, PcaProjection, SeededRng};
use nalgebra::{DMatrix, SymmetricEigen};

fn gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let v = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, v).unwrap()
}

#[test]
fn pca_matches_nalgebra_eigendecomposition() {
    let mut rng = SeededRng::new(11);
    for trial in 0..10 {
        let cols = 3 + trial % 5;
        let mut x = gaussian(60, cols, &mut rng);
        // correlate the columns so the spectrum is not flat
        for i in 0..x.rows() {
            let r = x.row_mut(i);
            for j in 1..cols {
                r[j] += 0.7 * r[j - 1] * j as f64;
            }
        }
        let p = PcaProjection::fit(&x, cols).unwrap();

        let n = x.rows() as f64;
        let means = x.column_means();
        let centered = DMatrix::from_fn(x.rows(), cols, |i, j| x[(i, j)] - means[j]);
        let cov = centered.transpose() * &centered / n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        for (k, &e) in order.iter().enumerate() {
            let expected = eig.eigenvalues[e];
            assert!(
                (p.explained_variance[k] - expected).abs() < 1e-9 * expected.abs().max(1.0),
                "trial {trial} k {k}"
            );
            let ours = p.components.column(k);
            let theirs = eig.eigenvectors.column(e);
            let cos: f64 = ours.iter().zip(theirs.iter()).map(|(a, b)| a * b).sum();
            assert!(cos.abs() > 1.0 - 1e-9, "trial {trial} k {k} cos {cos}");
            let lead =
                ours.iter().enumerate().fold(
                    0,
                    |best, (i, v)| if v.abs() > ours[best].abs() { i } else { best },
                );
            assert!(ours[lead] > 0.0);
        }
    }
}

#[test]
fn pca_projected_variance_matches_explained_variance() {
    let mut rng = SeededRng::new(5);
    let x = gaussian(200, 6, &mut rng);
    let p = PcaProjection::fit(&x, 3).unwrap();
    let z = p.transform(&x).unwrap();
    for k in 0..3 {
        let col = z.column(k);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64;
        assert!((var - p.explained_variance[k]).abs() < 1e-6);
    }
}

#[test]
fn knn_matches_sort_all_distances() {
    let mut rng = SeededRng::new(21);
    for trial in 0..20 {
        let train = gaussian(30, 2, &mut rng);
        let labels: Vec<u8> = (0..30).map(|_| u8::from(rng.next_f64() < 0.5)).collect();
        let test = gaussian(15, 2, &mut rng);
        let k = 1 + 2 * (trial % 3);
        let got = knn_predict(&train, &labels, &test, k).unwrap();
        for (t, &g) in test.row_iter().zip(&got) {
            let mut all: Vec<(f64, usize)> = train
                .row_iter()
                .enumerate()
                .map(|(i, r)| ((r[0] - t[0]).powi(2) + (r[1] - t[1]).powi(2), i))
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let attacks = all[..k].iter().filter(|(_, i)| labels[*i] == 1).count();
            let expect = u8::from(attacks * 2 > k);
            assert_eq!(g, expect, "trial {trial}");
        }
    }
}

#[test]
fn gnb_log_posterior_matches_direct_formula() {
    let mut rng = SeededRng::new(8);
    let mut x = gaussian(50, 2, &mut rng);
    let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            x.row_mut(i)[0] += 2.0;
        }
    }
    let model = GaussianNb::fit(&x, &labels).unwrap();

    let mut stats = Vec::new();
    for c in 0..2u8 {
        let rows: Vec<&[f64]> = x
            .row_iter()
            .zip(&labels)
            .filter(|(_, &y)| y == c)
            .map(|(r, _)| r)
            .collect();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..2)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let var: Vec<f64> = (0..2)
            .map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n)
            .collect();
        stats.push((n / 50.0, mean, var));
    }
    let probe = gaussian(20, 2, &mut rng);
    for t in probe.row_iter() {
        let joint: Vec<f64> = stats
            .iter()
            .map(|(prior, mean, var)| {
                let lik: f64 = (0..2)
                    .map(|j| {
                        (-(t[j] - mean[j]).powi(2) / (2.0 * var[j])).exp()
                            / (2.0 * std::f64::consts::PI * var[j]).sqrt()
                    })
                    .product();
                (prior * lik).ln()
            })
            .collect();
        let ours = model.log_joint(t);
        let norm = |v: &[f64]| {
            let m = v[0].max(v[1]);
            let lse = m + ((v[0] - m).exp() + (v[1] - m).exp()).ln();
            [v[0] - lse, v[1] - lse]
        };
        let (a, b) = (norm(&ours), norm(&joint));
        assert!(
            (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9,
            "{a:?} vs {b:?}"
        );
    }
}

#[test]
fn encoder_matches_naive_per_sample_loop() {
    let mut rng = SeededRng::new(2);
    let p = init_params(5, &[7, 4], 3, &mut rng).unwrap();
    let z = gaussian(9, 5, &mut rng);
    let (batch, _) = p.encode(&z).unwrap();
    for (i, row) in z.row_iter().enumerate() {
        let mut h = row.to_vec();
        for (l, layer) in p.encoder.iter().enumerate() {
            let mut next = layer.bias.clone();
            for (o, out) in next.iter_mut().enumerate() {
                for (k, v) in h.iter().enumerate() {
                    *out += v * layer.weight[(k, o)];
                }
            }
            if l + 1 < p.encoder.len() {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = next;
        }
        for (a, b) in h.iter().zip(batch.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn csv_round_trip_preserves_every_value() {
    let mut rng = SeededRng::new(77);
    let mut features = gaussian(40, 4, &mut rng);
    features
        .as_mut_slice()
        .iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v *= 10f64.powi((i % 13) as i32 - 6));
    features[(0, 0)] = f64::MIN_POSITIVE;
    features[(1, 1)] = -0.0;
    features[(2, 2)] = 1.0 / 3.0;
    let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
    let ds = DomainDataset::new(features, Some(labels), "src").unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.csv");
    save_csv(&ds, &path).unwrap();
    let back = load_csv(&path, Some("label")).unwrap();
    assert_eq!(back.labels, ds.labels);
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.features), bits(&ds.features));

    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    let again = read_csv(buf.as_slice(), Some("label"), "mem").unwrap();
    assert_eq!(bits(&again.features), bits(&ds.features));
}
