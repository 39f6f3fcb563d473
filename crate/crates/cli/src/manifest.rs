use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Record of one invocation, written next to its primary output as
/// `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(subcommand: &str, seed: Option<u64>) -> Self {
        RunManifest {
            tool: "eulercs",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            args: std::env::args().skip(1).collect(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn path_for(output: &Path) -> PathBuf {
        with_suffix(output, ".manifest.json")
    }

    /// Stamps the elapsed time and writes the manifest beside `primary`.
    pub fn finish(mut self, primary: &Path) -> std::io::Result<PathBuf> {
        if let Some(t) = self.started {
            self.wall_clock_seconds = t.elapsed().as_secs_f64();
        }
        let path = Self::path_for(primary);
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// `prefix` with `suffix` appended to its final component.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
