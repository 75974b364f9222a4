use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use mpa_core::battery::{replay_fixtures, run_battery, BatteryConfig, Method};
use mpa_core::data::{
    format_value, load_csv, load_labels, save_csv, synth_domain_pair, write_labels, DomainDataset,
    SynthSpec,
};
use mpa_core::eval::{score_task, Direction, TaskResult};
use mpa_core::pipeline::{predict_target, run_mpa, HyperParams};
use mpa_core::{checkpoint, config, gradcheck, ErrorClass, MpaError};

use crate::manifest::Recorder;
use crate::Common;

pub const EXIT_IO: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_DATA: u8 = 5;
pub const EXIT_SHAPE: u8 = 6;
pub const EXIT_NUMERIC: u8 = 7;
pub const EXIT_CHECK_FAILED: u8 = 8;

#[derive(Debug)]
pub enum CliError {
    Core(MpaError),
    CheckFailed(String),
}

impl From<MpaError> for CliError {
    fn from(e: MpaError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Shape => EXIT_SHAPE,
                ErrorClass::Numeric => EXIT_NUMERIC,
            },
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

type Outcome = Result<(), CliError>;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Reverse,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Forward => Direction::Forward,
            DirectionArg::Reverse => Direction::Reverse,
        }
    }
}

/// Runs `body` and writes the manifest whatever the outcome.
fn recorded(mut rec: Recorder, body: impl FnOnce(&mut Recorder) -> Outcome) -> Outcome {
    let result = std::fs::create_dir_all(rec.out_dir())
        .map_err(CliError::from)
        .and_then(|()| body(&mut rec));
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    rec.finish(status);
    result
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| MpaError::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_label_file(path: &Path, labels: &[u8]) -> Outcome {
    write_labels(labels, BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn load_hyper(common: &Common) -> Result<HyperParams, CliError> {
    let mut h = match &common.config {
        Some(p) => config::load_hyper(p)?,
        None => HyperParams::default(),
    };
    if let Some(seed) = common.seed {
        h.seed = seed;
    }
    Ok(h)
}

pub fn synth(common: &Common) -> Outcome {
    let rec = Recorder::new("synth", common.config.as_deref(), &common.out);
    recorded(rec, |rec| {
        let mut spec = match &common.config {
            Some(p) => config::load_synth(p)?,
            None => SynthSpec::default(),
        };
        if let Some(seed) = common.seed {
            spec.seed = seed;
        }
        rec.manifest.seed = Some(spec.seed);
        let pair = synth_domain_pair(&spec).map_err(|e| match e {
            MpaError::Parameter(m) => MpaError::Config(m),
            other => other,
        })?;
        save_csv(&pair.source, rec.output("source.csv"))?;
        save_csv(&pair.target, rec.output("target.csv"))?;
        write_label_file(&rec.output("hidden_labels.csv"), &pair.hidden_target_labels)?;
        println!(
            "wrote {} source rows ({} features), {} target rows ({} features)",
            pair.source.len(),
            pair.source.dim(),
            pair.target.len(),
            pair.target.dim()
        );
        Ok(())
    })
}

fn write_loss_history(path: &Path, model: &mpa_core::pipeline::TrainedModel) -> Outcome {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,l_sup,l_proto,l_ent,total")?;
    for (e, l) in model.loss_history.iter().enumerate() {
        writeln!(
            w,
            "{e},{},{},{},{}",
            format_value(l.l_sup),
            format_value(l.l_proto),
            format_value(l.l_ent),
            format_value(l.total)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(common: &Common, source: &Path, target: &Path, label_column: &str) -> Outcome {
    let rec = Recorder::new("train", common.config.as_deref(), &common.out);
    recorded(rec, |rec| {
        let h = load_hyper(common)?;
        rec.manifest.seed = Some(h.seed);
        rec.input(source);
        rec.input(target);
        let src = load_csv(source, Some(label_column))?;
        let tgt: DomainDataset = load_csv(target, None)?;
        let model = run_mpa(&src, &tgt, &h)?;
        checkpoint::save(&model, rec.output("model.ckpt"))?;
        write_loss_history(&rec.output("loss_history.csv"), &model)?;
        let (pred, _) = predict_target(&model, &tgt.features)?;
        write_label_file(&rec.output("predictions.csv"), &pred)?;
        std::fs::write(rec.output("hyper.toml"), config::to_toml(&h)?)?;
        let last = model.loss_history.last().expect("epochs >= 1");
        println!(
            "trained {} epochs: l_sup {:.6} l_proto {:.6} l_ent {:.6} total {:.6}",
            model.loss_history.len(),
            last.l_sup,
            last.l_proto,
            last.l_ent,
            last.total
        );
        Ok(())
    })
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    result: TaskResult,
    hyper: Option<HyperParams>,
}

pub fn eval(
    config_path: Option<&Path>,
    out: &Path,
    ckpt: &Path,
    target: &Path,
    truth: &Path,
    name: &str,
    direction: Direction,
) -> Outcome {
    let rec = Recorder::new("eval", config_path, out);
    recorded(rec, |rec| {
        let hyper = config_path.map(config::load_hyper).transpose()?;
        rec.manifest.seed = hyper.as_ref().map(|h| h.seed);
        rec.input(ckpt);
        rec.input(target);
        rec.input(truth);
        let model = checkpoint::load(ckpt)?;
        let tgt = load_csv(target, None)?;
        let labels = load_labels(truth)?;
        let (pred, _) = predict_target(&model, &tgt.features)?;
        let result = score_task(&pred, &labels, name, direction)?;
        write_label_file(&rec.output("predictions.csv"), &pred)?;
        println!(
            "{name}: accuracy {:.4} f1 {:.4} (tp {} fp {} tn {} fn {})",
            result.accuracy, result.f1, result.tp, result.fp, result.tn, result.fn_
        );
        let report = EvalReport {
            checkpoint: ckpt.display().to_string(),
            result,
            hyper,
        };
        write_json(&rec.output("report.json"), &report)
    })
}

pub fn battery(common: &Common, jobs: usize, fixtures: bool) -> Outcome {
    let rec = Recorder::new("battery", common.config.as_deref(), &common.out);
    recorded(rec, |rec| {
        if fixtures {
            let report = replay_fixtures()?;
            write_json(&rec.output("fixtures.json"), &report)?;
            println!("method  gap(pub) gap(calc)  ok   cv_acc(pub) cv_acc(calc)  ok");
            for r in &report.rows {
                println!(
                    "{:<6}  {:>8.3} {:>9.5}  {:<4} {:>11.3} {:>12.5}  {}",
                    r.method,
                    r.published_gap,
                    r.recomputed_gap,
                    r.gap_ok,
                    r.published_cv_acc,
                    r.recomputed_cv_acc,
                    r.cv_acc_ok
                );
            }
            if !report.all_ok() {
                let failed: Vec<String> = report
                    .rows
                    .iter()
                    .filter(|r| !(r.gap_ok && r.cv_acc_ok))
                    .map(|r| r.method.clone())
                    .collect();
                return Err(CliError::CheckFailed(format!(
                    "fixture rows outside tolerance: {}",
                    failed.join(", ")
                )));
            }
            return Ok(());
        }
        let mut cfg = match &common.config {
            Some(p) => config::load_battery(p)?,
            None => BatteryConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        rec.manifest.seed = Some(cfg.seed);
        let report = run_battery(&cfg, jobs)?;
        for m in &report.methods {
            for r in &m.results {
                let dir = common.out.join("runs").join(&r.task_name);
                std::fs::create_dir_all(&dir)?;
                write_json(
                    &rec.output(&format!("runs/{}/{}.json", r.task_name, m.method.name())),
                    r,
                )?;
            }
        }
        std::fs::write(rec.output("report.json"), report.to_json()? + "\n")?;
        let table = report.comparison_table();
        std::fs::write(rec.output("comparison.csv"), &table)?;
        print!("{table}");
        if let Some(m) = report.method(Method::Mpa) {
            println!(
                "mpa composite directional gap {:.4}",
                m.aggregate.composite_directional_gap
            );
        }
        Ok(())
    })
}

pub fn gradcheck(common: &Common, corrupt: Option<f64>) -> Outcome {
    let rec = Recorder::new("gradcheck", common.config.as_deref(), &common.out);
    recorded(rec, |rec| {
        let h = load_hyper(common)?;
        rec.manifest.seed = Some(h.seed);
        let outcome = gradcheck::run(&h, corrupt)?;
        write_json(&rec.output("gradcheck.json"), &outcome)?;
        let r = &outcome.report;
        println!(
            "max relative error {:.3e} over {} coordinates at {} (analytic {:.6e}, numeric {:.6e}): {}",
            r.max_rel_error,
            r.checked,
            r.worst_parameter,
            r.analytic,
            r.numeric,
            if outcome.passed { "PASS" } else { "FAIL" }
        );
        if outcome.passed {
            Ok(())
        } else {
            Err(CliError::CheckFailed(format!(
                "relative error {:.3e} >= {:.0e} at {}",
                r.max_rel_error, outcome.tolerance, r.worst_parameter
            )))
        }
    })
}
