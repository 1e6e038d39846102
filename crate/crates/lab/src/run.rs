//! Run directories, manifests and artifact writing.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{LabError, LabResult};
use crate::scenarios::{execute, Output};
use crate::svg;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DVRF_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_root: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

/// First of `--out`, the config's `out_dir`, `$DVRF_OUT`, `runs`.
pub fn output_root(opts: &RunOptions, cfg: &ExperimentConfig) -> PathBuf {
    opts.out_root
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
}

/// Creates `<root>/<scenario>-s<seed>`, or `…-<n>` if that already exists.
pub fn fresh_run_dir(root: &Path, scenario: &str, seed: u64) -> LabResult<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
    let base = format!("{scenario}-s{seed}");
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(LabError::io(&dir, e)),
        }
    }
    unreachable!("the run-directory counter is unbounded")
}

fn write(dir: &Path, name: &str, contents: &str) -> LabResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| LabError::io(path, e))
}

/// Runs a parsed config and writes its artifacts into a fresh directory.
pub fn run_config(mut cfg: ExperimentConfig, opts: &RunOptions) -> LabResult<RunOutcome> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let output = match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LabError::Schema(format!("--threads: {e}")))?;
            pool.install(|| execute(&cfg))?
        }
        None => execute(&cfg)?,
    };
    let root = output_root(opts, &cfg);
    let dir = fresh_run_dir(&root, cfg.scenario.name(), cfg.seed)?;
    let files = write_outputs(&dir, &cfg, &output)?;
    log::info!("wrote {} files to {}", files.len(), dir.display());
    Ok(RunOutcome {
        dir,
        files,
        summary: output.summary,
    })
}

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, output: &Output) -> LabResult<Vec<String>> {
    let mut files = Vec::new();
    for a in &output.artifacts {
        write(dir, &a.name, &a.table.to_csv())?;
        files.push(a.name.clone());
        if cfg.plots {
            for p in &a.plots {
                let svg = svg::render(&a.table, &p.x, &p.y, p.group.as_deref());
                match svg {
                    Ok(svg) => {
                        write(dir, &p.name, &svg)?;
                        files.push(p.name.clone());
                    }
                    Err(e) => log::warn!("skipping {}: {e}", p.name),
                }
            }
        }
    }
    let summary = serde_json::to_string_pretty(&output.summary).expect("summaries serialize") + "\n";
    write(dir, "summary.json", &summary)?;
    files.push("summary.json".into());
    let manifest = json!({
        "tool": "dvrf",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": cfg.scenario.name(),
        "seed": cfg.seed,
        "config": cfg,
        "files": files,
    });
    write(dir, "manifest.json", &(serde_json::to_string_pretty(&manifest).expect("manifests serialize") + "\n"))?;
    files.push("manifest.json".into());
    Ok(files)
}

/// Loads, runs and writes one config file.
pub fn run_path(path: &Path, opts: &RunOptions) -> LabResult<RunOutcome> {
    run_config(ExperimentConfig::load(path)?, opts)
}
