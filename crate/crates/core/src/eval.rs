//! Task scoring, cross-task robustness statistics and the KNN / Gaussian
//! naive Bayes baselines.

use serde::{Deserialize, Serialize};

use crate::error::{MpaError, Result};
use crate::numerics::{sq_dist, Matrix};

/// Transfer direction of a task. Forward is the G→W grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// Confusion counts and metrics of one transfer task (attack = positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_name: String,
    pub direction: Direction,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub f1: f64,
}

impl TaskResult {
    pub fn from_counts(
        task_name: impl Into<String>,
        direction: Direction,
        tp: usize,
        fp: usize,
        tn: usize,
        fn_: usize,
    ) -> Self {
        let n = tp + fp + tn + fn_;
        let accuracy = if n == 0 {
            0.0
        } else {
            (tp + tn) as f64 / n as f64
        };
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        TaskResult {
            task_name: task_name.into(),
            direction,
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            f1,
        }
    }
}

pub fn score_task(
    pred: &[u8],
    truth: &[u8],
    name: &str,
    direction: Direction,
) -> Result<TaskResult> {
    if pred.len() != truth.len() {
        return Err(MpaError::Shape(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(MpaError::Shape("cannot score an empty task".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    Ok(TaskResult::from_counts(name, direction, tp, fp, tn, fn_))
}

/// Anything carrying per-task accuracy, F1 and direction.
pub trait Scored {
    fn accuracy(&self) -> f64;
    fn f1(&self) -> f64;
    fn direction(&self) -> Direction;
}

impl Scored for TaskResult {
    fn accuracy(&self) -> f64 {
        self.accuracy
    }
    fn f1(&self) -> f64 {
        self.f1
    }
    fn direction(&self) -> Direction {
        self.direction
    }
}

/// Bare metrics, e.g. replayed from published tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub accuracy: f64,
    pub f1: f64,
    pub direction: Direction,
}

impl Scored for TaskScore {
    fn accuracy(&self) -> f64 {
        self.accuracy
    }
    fn f1(&self) -> f64 {
        self.f1
    }
    fn direction(&self) -> Direction {
        self.direction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divide by n.
    Population,
    /// Divide by n − 1.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub avg_acc: f64,
    pub std_acc: f64,
    pub avg_f1: f64,
    pub std_f1: f64,
    pub cv_acc: f64,
    pub cv_f1: f64,
    pub forward_acc: f64,
    pub forward_f1: f64,
    pub reverse_acc: f64,
    pub reverse_f1: f64,
    pub composite_directional_gap: f64,
    pub min_acc: f64,
    pub min_f1: f64,
    pub range_acc: f64,
    pub range_f1: f64,
    pub std_kind: StdKind,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64], kind: StdKind) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let denom = match kind {
        StdKind::Population => values.len() as f64,
        StdKind::Sample => (values.len() as f64 - 1.0).max(1.0),
    };
    (ss / denom).sqrt()
}

/// `std / avg`, 0 when the average is not positive.
pub fn coefficient_of_variation(avg: f64, std: f64) -> f64 {
    if avg > 0.0 {
        std / avg
    } else {
        0.0
    }
}

/// `0.5 · (|Δacc| + |ΔF1|)` with Δ = forward mean − reverse mean.
pub fn composite_directional_gap(
    forward_acc: f64,
    forward_f1: f64,
    reverse_acc: f64,
    reverse_f1: f64,
) -> f64 {
    0.5 * ((forward_acc - reverse_acc).abs() + (forward_f1 - reverse_f1).abs())
}

/// Cross-task statistics over exactly two forward and two reverse tasks,
/// with population standard deviations.
pub fn aggregate<T: Scored>(results: &[T]) -> Result<AggregateReport> {
    aggregate_with(results, StdKind::Population)
}

pub fn aggregate_with<T: Scored>(results: &[T], kind: StdKind) -> Result<AggregateReport> {
    if results.len() != 4 {
        return Err(MpaError::Input(format!(
            "aggregation needs exactly 4 tasks, got {}",
            results.len()
        )));
    }
    let forward: Vec<&T> = results
        .iter()
        .filter(|r| r.direction() == Direction::Forward)
        .collect();
    let reverse: Vec<&T> = results
        .iter()
        .filter(|r| r.direction() == Direction::Reverse)
        .collect();
    if forward.len() != 2 || reverse.len() != 2 {
        return Err(MpaError::Input(format!(
            "need 2 forward and 2 reverse tasks, got {} and {}",
            forward.len(),
            reverse.len()
        )));
    }
    let acc: Vec<f64> = results.iter().map(Scored::accuracy).collect();
    let f1: Vec<f64> = results.iter().map(Scored::f1).collect();
    let dir_mean = |group: &[&T], metric: fn(&T) -> f64| {
        group.iter().map(|r| metric(r)).sum::<f64>() / group.len() as f64
    };
    let forward_acc = dir_mean(&forward, T::accuracy);
    let forward_f1 = dir_mean(&forward, T::f1);
    let reverse_acc = dir_mean(&reverse, T::accuracy);
    let reverse_f1 = dir_mean(&reverse, T::f1);
    let (avg_acc, avg_f1) = (mean(&acc), mean(&f1));
    let (std_acc, std_f1) = (std_dev(&acc, kind), std_dev(&f1, kind));
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AggregateReport {
        avg_acc,
        std_acc,
        avg_f1,
        std_f1,
        cv_acc: coefficient_of_variation(avg_acc, std_acc),
        cv_f1: coefficient_of_variation(avg_f1, std_f1),
        forward_acc,
        forward_f1,
        reverse_acc,
        reverse_f1,
        composite_directional_gap: composite_directional_gap(
            forward_acc,
            forward_f1,
            reverse_acc,
            reverse_f1,
        ),
        min_acc: min(&acc),
        min_f1: min(&f1),
        range_acc: max(&acc) - min(&acc),
        range_f1: max(&f1) - min(&f1),
        std_kind: kind,
    })
}

/// Majority vote of the `k` nearest training rows (Euclidean). Distance ties
/// prefer the lower training index; vote ties go to class 0.
pub fn knn_predict(train: &Matrix, labels: &[u8], test: &Matrix, k: usize) -> Result<Vec<u8>> {
    if k == 0 || k > train.rows() {
        return Err(MpaError::Parameter(format!(
            "k = {k} must lie in 1..={}",
            train.rows()
        )));
    }
    if labels.len() != train.rows() {
        return Err(MpaError::Shape(format!(
            "{} labels for {} training rows",
            labels.len(),
            train.rows()
        )));
    }
    if train.cols() != test.cols() {
        return Err(MpaError::Shape(format!(
            "train has {} columns, test {}",
            train.cols(),
            test.cols()
        )));
    }
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train.rows());
    Ok(test
        .row_iter()
        .map(|x| {
            order.clear();
            order.extend(
                train
                    .row_iter()
                    .enumerate()
                    .map(|(i, t)| (sq_dist(x, t), i)),
            );
            order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let attacks = order[..k].iter().filter(|(_, i)| labels[*i] == 1).count();
            u8::from(2 * attacks > k)
        })
        .collect())
}

/// Minimum per-feature variance in the naive Bayes likelihoods.
pub const GNB_VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub vars: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn fit(train: &Matrix, labels: &[u8]) -> Result<Self> {
        if labels.len() != train.rows() {
            return Err(MpaError::Shape(format!(
                "{} labels for {} training rows",
                labels.len(),
                train.rows()
            )));
        }
        let d = train.cols();
        let mut counts = [0usize; 2];
        let mut means = [vec![0.0; d], vec![0.0; d]];
        for (r, &y) in train.row_iter().zip(labels) {
            let c = usize::from(y);
            counts[c] += 1;
            means[c].iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        if counts.contains(&0) {
            return Err(MpaError::Label(
                "naive Bayes needs both classes in training data".into(),
            ));
        }
        for c in 0..2 {
            means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
        }
        let mut vars = [vec![0.0; d], vec![0.0; d]];
        for (r, &y) in train.row_iter().zip(labels) {
            let c = usize::from(y);
            for ((s, v), m) in vars[c].iter_mut().zip(r).zip(&means[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for c in 0..2 {
            vars[c]
                .iter_mut()
                .for_each(|s| *s = (*s / counts[c] as f64).max(GNB_VAR_FLOOR));
        }
        let n = train.rows() as f64;
        let log_prior = [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()];
        Ok(GaussianNb {
            log_prior,
            means,
            vars,
        })
    }

    /// Unnormalized log posterior of each class for one row.
    pub fn log_joint(&self, x: &[f64]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (c, o) in out.iter_mut().enumerate() {
            for ((v, m), s) in x.iter().zip(&self.means[c]).zip(&self.vars[c]) {
                *o += -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (v - m) * (v - m) / (2.0 * s);
            }
        }
        out
    }

    pub fn predict(&self, test: &Matrix) -> Result<Vec<u8>> {
        if test.cols() != self.means[0].len() {
            return Err(MpaError::Shape(format!(
                "model has {} features, test {}",
                self.means[0].len(),
                test.cols()
            )));
        }
        Ok(test
            .row_iter()
            .map(|x| {
                let lj = self.log_joint(x);
                u8::from(lj[1] > lj[0])
            })
            .collect())
    }
}

pub fn gnb_fit_predict(train: &Matrix, labels: &[u8], test: &Matrix) -> Result<Vec<u8>> {
    GaussianNb::fit(train, labels)?.predict(test)
}

/// Published cross-plant results, used to check the aggregation arithmetic.
pub mod fixtures {
    /// (method, avg acc, std acc, avg F1, std F1)
    pub const AVERAGES: [(&str, f64, f64, f64, f64); 6] = [
        ("MPA", 0.843, 0.022, 0.838, 0.023),
        ("ANN", 0.518, 0.021, 0.400, 0.090),
        ("SVM", 0.503, 0.013, 0.280, 0.122),
        ("RF", 0.470, 0.014, 0.285, 0.079),
        ("KNN", 0.455, 0.027, 0.355, 0.115),
        ("NBM", 0.328, 0.030, 0.138, 0.127),
    ];

    /// (method, ACC CV, F1 CV, composite directional gap)
    pub const ROBUSTNESS: [(&str, f64, f64, f64); 6] = [
        ("MPA", 0.026, 0.027, 0.030),
        ("ANN", 0.040, 0.224, 0.078),
        ("SVM", 0.026, 0.435, 0.113),
        ("RF", 0.030, 0.278, 0.055),
        ("KNN", 0.059, 0.325, 0.135),
        ("NBM", 0.093, 0.923, 0.080),
    ];

    /// (method, min acc, min F1, acc range, F1 range)
    pub const WORST_CASE: [(&str, f64, f64, f64, f64); 6] = [
        ("MPA", 0.81, 0.80, 0.06, 0.06),
        ("ANN", 0.50, 0.26, 0.05, 0.25),
        ("SVM", 0.49, 0.09, 0.03, 0.33),
        ("RF", 0.45, 0.22, 0.04, 0.20),
        ("KNN", 0.41, 0.23, 0.07, 0.25),
        ("NBM", 0.29, 0.02, 0.08, 0.32),
    ];

    /// (method, G→W acc, G→W F1, W→G acc, W→G F1)
    pub const DIRECTIONAL: [(&str, f64, f64, f64, f64); 6] = [
        ("MPA", 0.860, 0.850, 0.825, 0.825),
        ("ANN", 0.535, 0.460, 0.500, 0.340),
        ("SVM", 0.515, 0.380, 0.490, 0.180),
        ("RF", 0.480, 0.240, 0.460, 0.330),
        ("KNN", 0.475, 0.240, 0.435, 0.470),
        ("NBM", 0.355, 0.190, 0.300, 0.085),
    ];
}

/// Four task scores whose directional means equal a published directional row.
pub fn directional_replay(
    forward_acc: f64,
    forward_f1: f64,
    reverse_acc: f64,
    reverse_f1: f64,
) -> [TaskScore; 4] {
    let fwd = TaskScore {
        accuracy: forward_acc,
        f1: forward_f1,
        direction: Direction::Forward,
    };
    let rev = TaskScore {
        accuracy: reverse_acc,
        f1: reverse_f1,
        direction: Direction::Reverse,
    };
    [fwd, fwd, rev, rev]
}
