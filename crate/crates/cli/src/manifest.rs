use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use cesp_core::dynamics::OptimizerConfig;
use cesp_core::ProblemInstance;

use crate::settings::Settings;
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct ProblemInfo {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl ProblemInfo {
    pub fn of(problem: &ProblemInstance) -> Self {
        Self {
            name: problem.name().to_string(),
            params: problem.params().iter().cloned().collect(),
        }
    }
}

/// Written as `manifest.json` beside every set of outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Explicit settings of the run; `--config manifest.json` replays them.
    pub settings: BTreeMap<String, String>,
    pub problem: ProblemInfo,
    pub config: OptimizerConfig,
    pub version: String,
    pub seed: u64,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

/// Tracks timing and outputs of one command.
pub struct Run {
    command: &'static str,
    argv: Vec<String>,
    settings: BTreeMap<String, String>,
    started: SystemTime,
    clock: Instant,
    pub out_dir: PathBuf,
    outputs: Vec<String>,
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.display().to_string(), e)
}

impl Run {
    pub fn start(command: &'static str, argv: Vec<String>, settings: &Settings) -> Result<Self, CliError> {
        let out_dir = PathBuf::from(settings.raw("out").unwrap_or("."));
        Ok(Self {
            command,
            argv,
            settings: settings.entries().clone(),
            started: SystemTime::now(),
            clock: Instant::now(),
            out_dir,
            outputs: Vec::new(),
        })
    }

    /// Create the output directory and write `name` through `fill`.
    pub fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        let path = self.out_dir.join(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = std::io::BufWriter::new(file);
        fill(&mut w)
            .and_then(|_| std::io::Write::flush(&mut w))
            .map_err(io_err(&path))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(
        self,
        problem: &ProblemInstance,
        config: &OptimizerConfig,
        summary: serde_json::Value,
    ) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: self.argv,
            settings: self.settings,
            problem: ProblemInfo::of(problem),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            started_unix_seconds: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            outputs: self.outputs,
            summary,
        };
        fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        let path = self.out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(manifest)
    }
}
