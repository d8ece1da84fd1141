use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use fgl_core::domain::ToyConfig;
use fgl_core::expert::TrainOptions;
use fgl_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub checkpoint_in: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
}

/// Fully resolved settings of one invocation; written to `config.json` in
/// the run directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ToyConfig,
    pub train: TrainOptions,
    pub seed: u64,
    pub jobs: usize,
    pub command: String,
    pub paths: Paths,
    /// Command-specific arguments as given on the command line.
    pub options: serde_json::Value,
}

impl RunConfig {
    /// Accepts either a full run config (with a `model` section) or a bare
    /// model config.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed = if value.get("model").is_some() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(value).map(|model| RunConfig {
                model,
                ..RunConfig::default()
            })
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Plain logging to stderr, mirrored into `log.txt` when a run directory
/// is active.
pub struct Run {
    pub dir: Option<PathBuf>,
    log: Option<File>,
}

impl Run {
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        let Some(dir) = cfg.paths.run_dir.clone() else {
            return Ok(Self {
                dir: None,
                log: None,
            });
        };
        for sub in ["checkpoints", "outputs"] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        }
        let cfg_path = dir.join("config.json");
        let text = serde_json::to_string_pretty(cfg).expect("config serializes");
        fs::write(&cfg_path, text + "\n").map_err(|e| io_err(&cfg_path, e))?;
        let log_path = dir.join("log.txt");
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| io_err(&log_path, e))?;
        Ok(Self {
            dir: Some(dir),
            log: Some(log),
        })
    }

    pub fn log(&mut self, msg: &str) {
        eprintln!("{msg}");
        if let Some(f) = &mut self.log {
            // Losing a log line is not worth aborting a run.
            let _ = writeln!(f, "{msg}");
        }
    }

    pub fn output(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("outputs").join(name))
    }

    /// Explicit path, else `checkpoints/<name>` in the run directory.
    pub fn checkpoint_out(&self, explicit: Option<&Path>, name: &str) -> Result<PathBuf> {
        match (explicit, &self.dir) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(d)) => Ok(d.join("checkpoints").join(name)),
            (None, None) => Err(Error::Config(
                "no checkpoint destination: pass --out or --run-dir".into(),
            )),
        }
    }
}
