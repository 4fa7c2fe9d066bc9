//! Run manifest written by every command.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    pub lbm_seconds: f64,
    pub mpm_seconds: f64,
    pub coupling_seconds: f64,
    pub optimization_seconds: f64,
    pub total_seconds: f64,
    pub lbm_steps: usize,
    pub mpm_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub windform: &'static str,
    pub file_format: u32,
    pub scene_schema: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scene: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub deterministic: bool,
    pub threads: Option<usize>,
    pub timings: StageTimings,
    pub versions: Versions,
    pub exit_code: i32,
    pub error: Option<String>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, deterministic: bool, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            scene: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            deterministic,
            threads,
            timings: StageTimings::default(),
            versions: Versions {
                windform: env!("CARGO_PKG_VERSION"),
                file_format: windform::io::FORMAT_VERSION,
                scene_schema: windform::scene::SCHEMA_VERSION,
            },
            exit_code: 0,
            error: None,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn write(&mut self, path: &Path) -> std::io::Result<()> {
        if let Some(t) = self.started {
            self.timings.total_seconds = t.elapsed().as_secs_f64();
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self).expect("manifest serializes"))
    }
}
