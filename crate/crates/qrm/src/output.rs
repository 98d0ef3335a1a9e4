//! Writes a [`Bundle`] and its run manifest.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{to_toml, Format, RunConfig};
use crate::error::CliError;
use crate::experiments::Bundle;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct WriteOptions {
    pub dir: PathBuf,
    pub format: Format,
    pub plots: bool,
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes tables, summary, matrices, texts and (optionally) plots, then the
/// manifest listing them. Returns the written file names.
pub fn write_bundle(bundle: &Bundle, cfg: &RunConfig, opts: &WriteOptions) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(&opts.dir).map_err(|e| CliError::io(&opts.dir, e))?;
    let mut files = Vec::new();
    if opts.format.csv() {
        for t in &bundle.tables {
            let name = format!("{}.csv", t.name);
            t.write_csv(&opts.dir.join(&name))?;
            files.push(name);
        }
    }
    if opts.format.json() {
        let tables: serde_json::Map<String, Value> = bundle.tables.iter().map(|t| (t.name.clone(), t.to_json())).collect();
        let doc = json!({ "experiment": bundle.experiment.name(), "summary": bundle.summary, "tables": tables });
        let name = "results.json".to_string();
        write(&opts.dir.join(&name), (serde_json::to_string_pretty(&doc).expect("json") + "\n").as_bytes())?;
        files.push(name);
    } else {
        let name = "summary.json".to_string();
        write(&opts.dir.join(&name), (serde_json::to_string_pretty(&bundle.summary).expect("json") + "\n").as_bytes())?;
        files.push(name);
    }
    for (name, m) in &bundle.matrices {
        let name = format!("{name}.qrmm");
        m.write(&opts.dir.join(&name))?;
        files.push(name);
    }
    for (name, text) in &bundle.texts {
        write(&opts.dir.join(name), text.as_bytes())?;
        files.push(name.clone());
    }
    if opts.plots {
        for (stem, plot) in &bundle.plots {
            plot.save(&opts.dir, stem)?;
            files.push(format!("{stem}.png"));
            files.push(format!("{stem}.dat"));
        }
    }
    let manifest = json!({
        "tool": "qrm",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": bundle.experiment.name(),
        "seed": cfg.seed,
        "config": to_toml(cfg),
        "files": files,
        "failure": bundle.failure,
    });
    write(&opts.dir.join(MANIFEST), (serde_json::to_string_pretty(&manifest).expect("json") + "\n").as_bytes())?;
    files.push(MANIFEST.into());
    Ok(files)
}
