//! `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rmft_core::corpus::SplitSpec;
use rmft_core::memproxy::{CheckpointSchedule, SimulationParams};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Technique {
    Baseline,
    Rmft,
    Dedup,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::Baseline, Technique::Rmft, Technique::Dedup];

    pub fn label(self) -> &'static str {
        match self {
            Technique::Baseline => "baseline",
            Technique::Rmft => "rmft",
            Technique::Dedup => "dedup",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Technique::ALL.into_iter().find(|t| t.label() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub domain_list: Option<PathBuf>,
    pub prompt_file: Option<PathBuf>,
    pub seed: u64,
    /// Explicit split sizes; `None` means the largest 100:10:1 split.
    pub split: Option<(usize, usize, usize)>,
    pub order: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub checkpoints_per_epoch: usize,
    pub max_new_bytes: usize,
    pub prompt_len: usize,
    pub prompt_limit: usize,
    pub techniques: Vec<Technique>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_step: f64,
    pub dataset: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimulationParams::default();
        let sched = CheckpointSchedule::default();
        RunConfig {
            corpus: None,
            domain_list: None,
            prompt_file: None,
            seed: 0,
            split: None,
            order: sim.order,
            alpha: sim.alpha,
            epochs: sched.epochs,
            checkpoints_per_epoch: sched.checkpoints_per_epoch,
            max_new_bytes: sim.max_new_bytes,
            prompt_len: 16,
            prompt_limit: 2_000,
            techniques: Technique::ALL.to_vec(),
            tau_min: 0.0,
            tau_max: 100.0,
            tau_step: 0.5,
            dataset: "corpus".to_owned(),
        }
    }
}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value for `{key}`: {value:?}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = opt_path(value),
            "domain_list" => self.domain_list = opt_path(value),
            "prompt_file" => self.prompt_file = opt_path(value),
            "seed" => self.seed = num(key, value)?,
            "split" => {
                self.split = if value.is_empty() || value == "auto" {
                    None
                } else {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    let [a, b, c] = parts[..] else {
                        return Err(usage(format!("`split` needs train,val,test sizes, got {value:?}")));
                    };
                    Some((num(key, a)?, num(key, b)?, num(key, c)?))
                }
            }
            "order" => self.order = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "checkpoints_per_epoch" => self.checkpoints_per_epoch = num(key, value)?,
            "max_new_bytes" => self.max_new_bytes = num(key, value)?,
            "prompt_len" => self.prompt_len = num(key, value)?,
            "prompt_limit" => self.prompt_limit = num(key, value)?,
            "techniques" => {
                let mut ts = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Technique::parse(s).ok_or_else(|| usage(format!("unknown technique {s:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                ts.sort();
                ts.dedup();
                self.techniques = ts;
            }
            "tau_min" => self.tau_min = num(key, value)?,
            "tau_max" => self.tau_max = num(key, value)?,
            "tau_step" => self.tau_step = num(key, value)?,
            "dataset" => self.dataset = value.to_owned(),
            _ => return Err(usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(usage(format!("order must be >= 2, got {}", self.order)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(usage(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.epochs == 0 || self.checkpoints_per_epoch == 0 {
            return Err(usage("epochs and checkpoints_per_epoch must be positive".into()));
        }
        if !(self.tau_step > 0.0 && self.tau_min.is_finite() && self.tau_max >= self.tau_min) {
            return Err(usage(format!(
                "bad tau grid: min {} max {} step {}",
                self.tau_min, self.tau_max, self.tau_step
            )));
        }
        Ok(())
    }

    pub fn split_spec(&self, available: usize) -> SplitSpec {
        match self.split {
            Some((a, b, c)) => SplitSpec::new(a, b, c, self.seed),
            None => SplitSpec::ratio_100_10_1(available, self.seed),
        }
    }

    pub fn schedule(&self) -> CheckpointSchedule {
        CheckpointSchedule {
            epochs: self.epochs,
            checkpoints_per_epoch: self.checkpoints_per_epoch,
            seed: self.seed,
        }
    }

    pub fn simulation(&self) -> SimulationParams {
        SimulationParams {
            order: self.order,
            alpha: self.alpha,
            max_new_bytes: self.max_new_bytes,
        }
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        let steps = ((self.tau_max - self.tau_min) / self.tau_step + 1e-9).floor() as usize;
        (0..=steps).map(|i| self.tau_min + i as f64 * self.tau_step).collect()
    }

    /// Canonical `key = value` form, keys sorted. The output directory is
    /// not part of it, so two runs into different directories serialize
    /// identically.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut kv = BTreeMap::new();
        kv.insert("alpha", self.alpha.to_string());
        kv.insert("checkpoints_per_epoch", self.checkpoints_per_epoch.to_string());
        kv.insert("corpus", path(&self.corpus));
        kv.insert("dataset", self.dataset.clone());
        kv.insert("domain_list", path(&self.domain_list));
        kv.insert("epochs", self.epochs.to_string());
        kv.insert("max_new_bytes", self.max_new_bytes.to_string());
        kv.insert("order", self.order.to_string());
        kv.insert("prompt_file", path(&self.prompt_file));
        kv.insert("prompt_len", self.prompt_len.to_string());
        kv.insert("prompt_limit", self.prompt_limit.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert(
            "split",
            self.split
                .map_or("auto".to_owned(), |(a, b, c)| format!("{a},{b},{c}")),
        );
        kv.insert("tau_max", self.tau_max.to_string());
        kv.insert("tau_min", self.tau_min.to_string());
        kv.insert("tau_step", self.tau_step.to_string());
        kv.insert(
            "techniques",
            self.techniques.iter().map(|t| t.label()).collect::<Vec<_>>().join(","),
        );
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
