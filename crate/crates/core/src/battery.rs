//! The four-task transfer battery (two forward, two reverse) and the replay
//! of published tables through the aggregation code.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{synth_domain_pair, SynthSpec, SyntheticPair};
use crate::error::{MpaError, Result};
use crate::eval::{
    aggregate, coefficient_of_variation, directional_replay, fixtures, gnb_fit_predict,
    knn_predict, score_task, AggregateReport, Direction, TaskResult,
};
use crate::numerics::SeededRng;
use crate::pipeline::{predict_target, project_domains, run_mpa, HyperParams};

pub const GAP_TOLERANCE: f64 = 0.0005;
pub const CV_TOLERANCE: f64 = 0.0015;
/// Half a unit in the last printed digit of the avg/std fixtures.
pub const TABLE_ROUNDING: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mpa,
    /// MPA with alpha = beta = 0.
    MpaAblation,
    Knn,
    Gnb,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mpa, Method::MpaAblation, Method::Knn, Method::Gnb];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mpa => "mpa",
            Method::MpaAblation => "mpa_ablation",
            Method::Knn => "knn",
            Method::Gnb => "gnb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub direction: Direction,
    #[serde(default)]
    pub synth: SynthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    /// Root seed; every data and model seed is derived from it.
    pub seed: u64,
    pub knn_k: usize,
    pub hyper: HyperParams,
    pub task: Vec<TaskSpec>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        let task = |name: &str, direction, seed| TaskSpec {
            name: name.into(),
            direction,
            synth: SynthSpec {
                seed,
                ..SynthSpec::default()
            },
        };
        BatteryConfig {
            seed: 0,
            knn_k: 5,
            hyper: HyperParams::default(),
            task: vec![
                task("g2w-1", Direction::Forward, 1),
                task("g2w-2", Direction::Forward, 2),
                task("w2g-1", Direction::Reverse, 3),
                task("w2g-2", Direction::Reverse, 4),
            ],
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.task.len() != 4 {
            return Err(MpaError::Config(format!(
                "task: expected 4 tasks, found {}",
                self.task.len()
            )));
        }
        let forward = self
            .task
            .iter()
            .filter(|t| t.direction == Direction::Forward)
            .count();
        if forward != 2 {
            return Err(MpaError::Config(format!(
                "task: need 2 forward and 2 reverse tasks, found {forward} and {}",
                4 - forward
            )));
        }
        for (i, t) in self.task.iter().enumerate() {
            if t.name.is_empty() || self.task[..i].iter().any(|o| o.name == t.name) {
                return Err(MpaError::Config(format!(
                    "task.name: '{}' is empty or repeated",
                    t.name
                )));
            }
            t.synth.validate()?;
        }
        if self.knn_k == 0 {
            return Err(MpaError::Config("knn_k: must be at least 1".into()));
        }
        self.hyper.validate()
    }

    /// Seed used to generate task `i`'s data.
    pub fn data_seed(&self, i: usize) -> u64 {
        SeededRng::new(self.seed).fork(2 * i as u64).next_u64() ^ self.task[i].synth.seed
    }

    /// Seed used to initialize task `i`'s networks.
    pub fn model_seed(&self, i: usize) -> u64 {
        SeededRng::new(self.seed).fork(2 * i as u64 + 1).next_u64() ^ self.hyper.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub name: String,
    pub direction: Direction,
    pub data_seed: u64,
    pub model_seed: u64,
    pub synth: SynthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub results: Vec<TaskResult>,
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub seed: u64,
    pub knn_k: usize,
    pub hyper: HyperParams,
    pub tasks: Vec<TaskRecord>,
    pub methods: Vec<MethodReport>,
}

impl BatteryReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MpaError::Numeric(e.to_string()))
    }

    /// One CSV row per method with the aggregate columns.
    pub fn comparison_table(&self) -> String {
        let mut out = String::from(
            "method,avg_acc,std_acc,avg_f1,std_f1,cv_acc,cv_f1,composite_directional_gap,min_acc,min_f1,range_acc,range_f1\n",
        );
        for m in &self.methods {
            let a = &m.aggregate;
            let cells = [
                a.avg_acc,
                a.std_acc,
                a.avg_f1,
                a.std_f1,
                a.cv_acc,
                a.cv_f1,
                a.composite_directional_gap,
                a.min_acc,
                a.min_f1,
                a.range_acc,
                a.range_f1,
            ];
            out.push_str(m.method.name());
            for c in cells {
                out.push_str(&format!(",{c:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

fn run_method(
    method: Method,
    pair: &SyntheticPair,
    cfg: &BatteryConfig,
    model_seed: u64,
) -> Result<Vec<u8>> {
    let labels = pair.source.require_labels()?;
    match method {
        Method::Mpa | Method::MpaAblation => {
            let mut h = HyperParams {
                seed: model_seed,
                ..cfg.hyper.clone()
            };
            if method == Method::MpaAblation {
                h.alpha = 0.0;
                h.beta = 0.0;
            }
            let model = run_mpa(&pair.source, &pair.target, &h)?;
            Ok(predict_target(&model, &pair.target.features)?.0)
        }
        Method::Knn | Method::Gnb => {
            let shared = project_domains(&pair.source, &pair.target, cfg.hyper.d)?;
            if method == Method::Knn {
                knn_predict(&shared.z_source, labels, &shared.z_target, cfg.knn_k)
            } else {
                gnb_fit_predict(&shared.z_source, labels, &shared.z_target)
            }
        }
    }
}

/// Runs every (task, method) pair on up to `jobs` threads. The report does
/// not depend on `jobs`.
pub fn run_battery(cfg: &BatteryConfig, jobs: usize) -> Result<BatteryReport> {
    cfg.validate()?;
    let tasks: Vec<TaskRecord> = cfg
        .task
        .iter()
        .enumerate()
        .map(|(i, t)| TaskRecord {
            name: t.name.clone(),
            direction: t.direction,
            data_seed: cfg.data_seed(i),
            model_seed: cfg.model_seed(i),
            synth: SynthSpec {
                seed: cfg.data_seed(i),
                ..t.synth.clone()
            },
        })
        .collect();
    let pairs = tasks
        .iter()
        .map(|t| synth_domain_pair(&t.synth))
        .collect::<Result<Vec<_>>>()?;

    let units: Vec<(usize, Method)> = (0..tasks.len())
        .flat_map(|t| Method::ALL.into_iter().map(move |m| (t, m)))
        .collect();
    let slots: Vec<Mutex<Option<Result<Vec<u8>>>>> =
        units.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let u = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(t, m)) = units.get(u) else { break };
        let out = run_method(m, &pairs[t], cfg, tasks[t].model_seed);
        *slots[u].lock().expect("slot lock") = Some(out);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.max(1) {
            s.spawn(work);
        }
        work();
    });

    let mut predictions = Vec::with_capacity(units.len());
    for slot in slots {
        predictions.push(
            slot.into_inner()
                .expect("slot lock")
                .expect("every unit ran")?,
        );
    }
    let mut methods = Vec::new();
    for (mi, &method) in Method::ALL.iter().enumerate() {
        let results = (0..tasks.len())
            .map(|t| {
                let pred = &predictions[t * Method::ALL.len() + mi];
                score_task(
                    pred,
                    &pairs[t].hidden_target_labels,
                    &tasks[t].name,
                    tasks[t].direction,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregate = aggregate(&results)?;
        methods.push(MethodReport {
            method,
            results,
            aggregate,
        });
    }
    Ok(BatteryReport {
        seed: cfg.seed,
        knn_k: cfg.knn_k,
        hyper: cfg.hyper.clone(),
        tasks,
        methods,
    })
}

/// One published method pushed back through the aggregation code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub method: String,
    pub published_gap: f64,
    pub recomputed_gap: f64,
    pub gap_error: f64,
    pub gap_ok: bool,
    pub published_cv_acc: f64,
    pub recomputed_cv_acc: f64,
    pub cv_acc_error: f64,
    pub cv_acc_ok: bool,
    /// Range of CV values reachable from any avg/std inside their rounding intervals.
    pub cv_acc_interval: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub gap_tolerance: f64,
    pub cv_tolerance: f64,
    pub rows: Vec<FixtureRow>,
}

impl FixtureReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.gap_ok && r.cv_acc_ok)
    }
}

pub fn replay_fixtures() -> Result<FixtureReport> {
    let mut rows = Vec::new();
    for (i, &(method, fa, ff, ra, rf)) in fixtures::DIRECTIONAL.iter().enumerate() {
        let (avg_name, avg_acc, std_acc, _, _) = fixtures::AVERAGES[i];
        let (rob_name, cv_acc, _, gap) = fixtures::ROBUSTNESS[i];
        debug_assert!(avg_name == method && rob_name == method);
        let recomputed_gap =
            aggregate(&directional_replay(fa, ff, ra, rf))?.composite_directional_gap;
        let recomputed_cv = coefficient_of_variation(avg_acc, std_acc);
        let gap_error = (recomputed_gap - gap).abs();
        let cv_acc_error = (recomputed_cv - cv_acc).abs();
        rows.push(FixtureRow {
            method: method.to_string(),
            published_gap: gap,
            recomputed_gap,
            gap_error,
            gap_ok: gap_error <= GAP_TOLERANCE,
            published_cv_acc: cv_acc,
            recomputed_cv_acc: recomputed_cv,
            cv_acc_error,
            cv_acc_ok: cv_acc_error <= CV_TOLERANCE,
            cv_acc_interval: [
                (std_acc - TABLE_ROUNDING) / (avg_acc + TABLE_ROUNDING),
                (std_acc + TABLE_ROUNDING) / (avg_acc - TABLE_ROUNDING),
            ],
        });
    }
    Ok(FixtureReport {
        gap_tolerance: GAP_TOLERANCE,
        cv_tolerance: CV_TOLERANCE,
        rows,
    })
}
