use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

/// Collects data outputs of one run and writes `manifest.json` last.
pub struct Run {
    subcommand: &'static str,
    parameters: serde_json::Value,
    seed: Option<u64>,
    out: Option<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RunManifest<'a> {
    subcommand: &'a str,
    parameters: &'a serde_json::Value,
    seed: Option<u64>,
    tool_version: &'a str,
    outputs: &'a [PathBuf],
    wall_clock_seconds: f64,
}

impl Run {
    pub fn new(subcommand: &'static str, parameters: impl Serialize, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        Run {
            subcommand,
            parameters: serde_json::to_value(parameters).unwrap_or(serde_json::Value::Null),
            seed,
            out,
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    /// Writes `contents` to `<out>/<name>`, or to stdout without `--out`.
    pub fn emit(&mut self, name: &str, contents: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
                let path = dir.join(name);
                write_atomically(&path, contents.as_bytes())?;
                self.outputs.push(path);
            }
            None => print!("{contents}"),
        }
        Ok(())
    }

    pub fn emit_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(name, &text)
    }

    /// Records files written directly into the output directory.
    pub fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    pub fn finish(self) -> Result<()> {
        let Some(dir) = &self.out else {
            return Ok(());
        };
        let manifest = RunManifest {
            subcommand: self.subcommand,
            parameters: &self.parameters,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            outputs: &self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomically(&dir.join("manifest.json"), text.as_bytes())
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
