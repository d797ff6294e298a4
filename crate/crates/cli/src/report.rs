//! Bundles stage outputs into `report/` with a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

const STAGES: &[(&str, &[&str])] = &[
    ("ingest", &["corpus.jsonl"]),
    ("eda", &["eda", "splits"]),
    ("mask", &["rmft"]),
    ("dedup", &["dedup"]),
    ("simulate", &["simulate"]),
    ("eval", &["eval"]),
    ("maxter", &["maxter"]),
    ("config", &["config"]),
];

const BUNDLED: &[&str] = &["csv", "json", "conf"];

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
    /// Whether a copy lives in the report directory.
    pub bundled: bool,
}

#[derive(Debug, Serialize)]
pub struct StageEntry {
    pub stage: &'static str,
    /// `present` or `missing`.
    pub status: &'static str,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub version: u32,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub generated_unix: u64,
    pub stages: Vec<StageEntry>,
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn stage_files(root: &Path, targets: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for t in targets {
        let p = root.join(t);
        if !p.exists() {
            continue;
        }
        for entry in WalkDir::new(&p).sort_by_file_name() {
            let entry = entry?;
            if entry.file_type().is_file() {
                out.push(entry.into_path());
            }
        }
    }
    Ok(out)
}

/// Rebuilds `<run_dir>/report` from scratch and returns its manifest.
pub fn build(run_dir: &Path) -> Result<Manifest> {
    let report_dir = run_dir.join("report");
    if report_dir.exists() {
        fs::remove_dir_all(&report_dir).with_context(|| format!("clearing {}", report_dir.display()))?;
    }
    fs::create_dir_all(&report_dir)?;

    let mut stages = Vec::new();
    for &(stage, targets) in STAGES {
        let files = stage_files(run_dir, targets)?;
        if files.is_empty() {
            stages.push(StageEntry {
                stage,
                status: "missing",
                files: Vec::new(),
            });
            continue;
        }
        let mut entries = Vec::new();
        for f in files {
            let data = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
            let path = rel(run_dir, &f);
            let bundled = f
                .extension()
                .is_some_and(|e| BUNDLED.contains(&e.to_string_lossy().as_ref()));
            if bundled {
                let dest = report_dir.join(&path);
                fs::create_dir_all(dest.parent().expect("file has a parent"))?;
                fs::write(&dest, &data).with_context(|| format!("writing {}", dest.display()))?;
            }
            entries.push(FileEntry {
                path,
                bytes: data.len() as u64,
                sha256: format!("{:x}", Sha256::digest(&data)),
                bundled,
            });
        }
        stages.push(StageEntry {
            stage,
            status: "present",
            files: entries,
        });
    }

    let manifest = Manifest {
        format: "rmft-report",
        version: 1,
        generated_unix: timestamp(),
        stages,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(report_dir.join("manifest.json"), text)?;
    Ok(manifest)
}
