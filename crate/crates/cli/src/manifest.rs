use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Record written as `manifest.json` next to the outputs of every run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config_path: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub duration_secs: f64,
    pub status: String,
}

pub struct Recorder {
    start: Instant,
    out: PathBuf,
    pub manifest: RunManifest,
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

impl Recorder {
    pub fn new(command: &'static str, config: Option<&Path>, out: &Path) -> Self {
        Recorder {
            start: Instant::now(),
            out: out.to_path_buf(),
            manifest: RunManifest {
                command,
                config_path: config.map(show),
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed: None,
                tool_version: env!("CARGO_PKG_VERSION"),
                duration_secs: 0.0,
                status: String::new(),
            },
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(show(p));
    }

    /// Path of `name` inside the output directory, recorded as an output.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.outputs.push(show(&p));
        p
    }

    /// Writes the manifest. Failures here are reported but do not change
    /// the command's own outcome.
    pub fn finish(mut self, status: String) {
        self.manifest.duration_secs = self.start.elapsed().as_secs_f64();
        self.manifest.status = status;
        let path = self.out.join("manifest.json");
        let written = std::fs::create_dir_all(&self.out).and_then(|()| {
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&self.manifest).unwrap_or_default() + "\n",
            )
        });
        if let Err(e) = written {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
    }
}
