//! Byte-level n-gram model used as a cheap stand-in for a fine-tuned
//! language model: trained on a shuffled multi-epoch stream with periodic
//! checkpoints, decoded greedily, scored by perplexity.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Size of the byte alphabet the smoothing mass is spread over.
pub const ALPHABET: usize = 256;

pub const DEFAULT_ORDER: usize = 8;
pub const DEFAULT_ALPHA: f64 = 0.1;

const SNAPSHOT_FORMAT: &str = "rmft-ngram";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct NextCounts {
    total: u64,
    // sorted by byte
    counts: Vec<(u8, u32)>,
}

impl NextCounts {
    fn add(&mut self, byte: u8) {
        self.total += 1;
        match self.counts.binary_search_by_key(&byte, |&(b, _)| b) {
            Ok(i) => self.counts[i].1 += 1,
            Err(i) => self.counts.insert(i, (byte, 1)),
        }
    }

    fn get(&self, byte: u8) -> u32 {
        self.counts
            .binary_search_by_key(&byte, |&(b, _)| b)
            .map_or(0, |i| self.counts[i].1)
    }

    /// Most frequent next byte, lowest byte on ties.
    fn argmax(&self) -> Option<u8> {
        let mut best: Option<(u8, u32)> = None;
        for &(b, c) in &self.counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((b, c));
            }
        }
        best.map(|(b, _)| b)
    }
}

/// Additively smoothed byte n-gram counts.
///
/// `P(b | ctx) = (count(ctx, b) + alpha) / (count(ctx) + alpha * 256)`,
/// where `ctx` is the preceding `order - 1` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    contexts: HashMap<Vec<u8>, NextCounts>,
    vocab: BTreeSet<u8>,
}

impl NGramModel {
    pub fn new(order: usize, alpha: f64) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidParameter(format!("order must be >= 2, got {order}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(NGramModel {
            order,
            alpha,
            contexts: HashMap::new(),
            vocab: BTreeSet::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Bytes observed in training, ascending.
    pub fn vocab(&self) -> &BTreeSet<u8> {
        &self.vocab
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    /// Raw count of `byte` following `context`.
    pub fn count(&self, context: &[u8], byte: u8) -> u32 {
        self.contexts.get(context).map_or(0, |n| n.get(byte))
    }

    /// Adds every full-context position of `text` to the counts.
    pub fn train(&mut self, text: &[u8]) {
        self.vocab.extend(text.iter().copied());
        let ctx_len = self.order - 1;
        if text.len() < self.order {
            return;
        }
        for window in text.windows(self.order) {
            let (ctx, next) = window.split_at(ctx_len);
            match self.contexts.get_mut(ctx) {
                Some(n) => n.add(next[0]),
                None => {
                    let mut n = NextCounts::default();
                    n.add(next[0]);
                    self.contexts.insert(ctx.to_vec(), n);
                }
            }
        }
    }

    /// Smoothed probability of `byte` after `context` (only the last
    /// `order - 1` bytes of `context` are used).
    pub fn prob(&self, context: &[u8], byte: u8) -> f64 {
        let ctx = &context[context.len().saturating_sub(self.order - 1)..];
        let (c, total) = self
            .contexts
            .get(ctx)
            .map_or((0, 0), |n| (n.get(byte), n.total));
        (c as f64 + self.alpha) / (total as f64 + self.alpha * ALPHABET as f64)
    }

    fn next_byte(&self, context: &[u8]) -> Option<u8> {
        match self.contexts.get(context) {
            Some(n) => n.argmax(),
            // uniform over the observed vocabulary; the tie rule picks its lowest byte
            None => self.vocab.first().copied(),
        }
    }

    /// Argmax over every full context ending in `suffix`. Linear in the
    /// number of contexts; only used while the buffer is still short.
    fn next_byte_short(&self, suffix: &[u8]) -> Option<u8> {
        let mut merged = [0u64; ALPHABET];
        let mut any = false;
        for (ctx, n) in &self.contexts {
            if ctx.ends_with(suffix) {
                any = true;
                for &(b, c) in &n.counts {
                    merged[b as usize] += u64::from(c);
                }
            }
        }
        if !any {
            return self.vocab.first().copied();
        }
        let mut best = 0;
        for b in 1..ALPHABET {
            if merged[b] > merged[best] {
                best = b;
            }
        }
        Some(best as u8)
    }

    /// Greedy continuation of `prompt`, at most `max_bytes` long. While
    /// fewer than `order - 1` bytes are available, counts of all contexts
    /// ending in the available bytes are pooled.
    pub fn generate_bytes(&self, prompt: &[u8], max_bytes: usize) -> Vec<u8> {
        let ctx_len = self.order - 1;
        let mut buf = prompt.to_vec();
        for _ in 0..max_bytes {
            let next = if buf.len() >= ctx_len {
                self.next_byte(&buf[buf.len() - ctx_len..])
            } else {
                self.next_byte_short(&buf)
            };
            match next {
                Some(b) => buf.push(b),
                None => break,
            }
        }
        buf.split_off(prompt.len())
    }

    /// Greedy continuation as text; invalid UTF-8 is replaced.
    pub fn generate(&self, prompt: &str, max_bytes: usize) -> String {
        String::from_utf8_lossy(&self.generate_bytes(prompt.as_bytes(), max_bytes)).into_owned()
    }

    /// `exp` of the mean negative log-probability of every byte that has a
    /// full preceding context.
    pub fn perplexity(&self, text: &str) -> Result<f64> {
        let bytes = text.as_bytes();
        if bytes.len() < self.order {
            return Err(Error::ShortInput {
                len: bytes.len(),
                order: self.order,
            });
        }
        let ctx_len = self.order - 1;
        let mut nll = 0.0;
        let mut n = 0usize;
        for window in bytes.windows(self.order) {
            nll -= self.prob(&window[..ctx_len], window[ctx_len]).ln();
            n += 1;
        }
        Ok((nll / n as f64).exp())
    }

    /// Writes a versioned JSON dump with contexts in byte order.
    pub fn write_snapshot<W: Write>(&self, writer: W) -> Result<()> {
        let mut contexts: Vec<ContextDump> = self
            .contexts
            .iter()
            .map(|(ctx, n)| ContextDump {
                context: ctx.clone(),
                next: n.counts.clone(),
            })
            .collect();
        contexts.sort_by(|a, b| a.context.cmp(&b.context));
        let dump = SnapshotDump {
            format: SNAPSHOT_FORMAT.to_owned(),
            version: SNAPSHOT_VERSION,
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.iter().copied().collect(),
            contexts,
        };
        serde_json::to_writer(writer, &dump)?;
        Ok(())
    }

    pub fn read_snapshot<R: std::io::Read>(reader: R) -> Result<Self> {
        let dump: SnapshotDump = serde_json::from_reader(reader)?;
        if dump.format != SNAPSHOT_FORMAT || dump.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotFormat(format!("{} v{}", dump.format, dump.version)));
        }
        let mut model = NGramModel::new(dump.order, dump.alpha)?;
        model.vocab = dump.vocab.into_iter().collect();
        for c in dump.contexts {
            if c.context.len() != dump.order - 1 {
                return Err(Error::SnapshotFormat("context length does not match order".into()));
            }
            let total = c.next.iter().map(|&(_, n)| u64::from(n)).sum();
            model.contexts.insert(
                c.context,
                NextCounts {
                    total,
                    counts: c.next,
                },
            );
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ContextDump {
    context: Vec<u8>,
    next: Vec<(u8, u32)>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDump {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    vocab: Vec<u8>,
    contexts: Vec<ContextDump>,
}

/// Training length and checkpoint spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSchedule {
    pub epochs: usize,
    pub checkpoints_per_epoch: usize,
    pub seed: u64,
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule {
            epochs: 3,
            checkpoints_per_epoch: 10,
            seed: 0,
        }
    }
}

impl CheckpointSchedule {
    pub fn total_checkpoints(&self) -> usize {
        self.epochs * self.checkpoints_per_epoch
    }

    /// Datapoint ids in training order: one seeded shuffle per epoch.
    pub fn stream(&self, corpus_len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(corpus_len * self.epochs);
        for epoch in 0..self.epochs {
            let mut ids: Vec<usize> = (0..corpus_len).collect();
            let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch as u64);
            ids.shuffle(&mut rng);
            out.extend(ids);
        }
        out
    }

    /// Number of stream items consumed at checkpoint `i` (1-based):
    /// `ceil(i * stream_len / total_checkpoints)`.
    pub fn consumed_at(&self, i: usize, stream_len: usize) -> usize {
        let total = self.total_checkpoints();
        (i * stream_len).div_ceil(total)
    }
}

/// Model state handed to the checkpoint visitor.
pub struct CheckpointState<'a> {
    pub index: usize,
    pub model: &'a NGramModel,
    pub seen_ids: &'a BTreeSet<usize>,
}

/// Trains over the scheduled stream and calls `visit` at every checkpoint.
pub fn train_with_checkpoints<F>(
    corpus: &Corpus,
    schedule: &CheckpointSchedule,
    order: usize,
    alpha: f64,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(CheckpointState<'_>) -> Result<()>,
{
    if schedule.total_checkpoints() == 0 {
        return Err(Error::InvalidParameter("schedule has no checkpoints".into()));
    }
    let mut model = NGramModel::new(order, alpha)?;
    let stream = schedule.stream(corpus.len());
    let mut seen = BTreeSet::new();
    let mut consumed = 0;
    for index in 1..=schedule.total_checkpoints() {
        let until = schedule.consumed_at(index, stream.len());
        for &id in &stream[consumed..until] {
            let dp = &corpus.datapoints()[id];
            model.train(dp.text().as_bytes());
            seen.insert(id);
        }
        consumed = until;
        visit(CheckpointState {
            index,
            model: &model,
            seen_ids: &seen,
        })?;
    }
    Ok(())
}

/// A model snapshot taken at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub checkpoint_index: usize,
    pub model: NGramModel,
    pub seen_ids: BTreeSet<usize>,
}

/// Trains over the scheduled stream and keeps a full copy of the model at
/// every checkpoint. Prefer [`train_with_checkpoints`] for large corpora.
pub fn train_stream(
    corpus: &Corpus,
    schedule: &CheckpointSchedule,
    order: usize,
    alpha: f64,
) -> Result<Vec<Snapshot>> {
    let mut out = Vec::with_capacity(schedule.total_checkpoints());
    train_with_checkpoints(corpus, schedule, order, alpha, |state| {
        out.push(Snapshot {
            checkpoint_index: state.index,
            model: state.model.clone(),
            seen_ids: state.seen_ids.clone(),
        });
        Ok(())
    })?;
    Ok(out)
}

/// What one checkpoint produced: the data it had seen, its greedy
/// generations and its per-prompt perplexities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointArtifact {
    pub checkpoint_index: usize,
    pub seen_datapoint_ids: Vec<usize>,
    pub generations: Vec<String>,
    pub per_prompt_perplexity: Vec<f64>,
}

impl CheckpointArtifact {
    pub fn average_perplexity(&self) -> Option<f64> {
        if self.per_prompt_perplexity.is_empty() {
            return None;
        }
        let n = self.per_prompt_perplexity.len() as f64;
        Some(self.per_prompt_perplexity.iter().sum::<f64>() / n)
    }
}

pub fn write_artifacts_jsonl<W: Write>(artifacts: &[CheckpointArtifact], mut writer: W) -> Result<()> {
    for a in artifacts {
        serde_json::to_writer(&mut writer, a)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<artifacts>", e))?;
    }
    Ok(())
}

pub fn read_artifacts_jsonl<R: BufRead>(reader: R) -> Result<Vec<CheckpointArtifact>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<artifacts>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Inputs for a simulated fine-tuning run.
#[derive(Debug, Clone, Copy)]
pub struct SimulationParams {
    pub order: usize,
    pub alpha: f64,
    pub max_new_bytes: usize,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            max_new_bytes: 64,
        }
    }
}

/// Trains on `corpus` and records one artifact per checkpoint: greedy
/// continuations of `prompts` and perplexities of `eval_texts`.
pub fn simulate(
    corpus: &Corpus,
    schedule: &CheckpointSchedule,
    params: &SimulationParams,
    prompts: &[String],
    eval_texts: &[String],
) -> Result<Vec<CheckpointArtifact>> {
    if let Some(short) = eval_texts.iter().find(|t| t.len() < params.order) {
        return Err(Error::ShortInput {
            len: short.len(),
            order: params.order,
        });
    }
    let mut out = Vec::with_capacity(schedule.total_checkpoints());
    train_with_checkpoints(corpus, schedule, params.order, params.alpha, |state| {
        let generations = prompts
            .par_iter()
            .map(|p| state.model.generate(p, params.max_new_bytes))
            .collect();
        let per_prompt_perplexity = eval_texts
            .par_iter()
            .map(|t| state.model.perplexity(t))
            .collect::<Result<_>>()?;
        out.push(CheckpointArtifact {
            checkpoint_index: state.index,
            seen_datapoint_ids: state.seen_ids.iter().copied().collect(),
            generations,
            per_prompt_perplexity,
        });
        Ok(())
    })?;
    Ok(out)
}
