//! Email-style datapoints, corpora, seeded splits and JSONL persistence.
//!
//! A message is split into a header block and a body at the first blank
//! line. All offsets used across the crate are byte offsets into
//! [`Datapoint::text`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One email sample.
///
/// The full text is stored once; the header block and body are views into
/// it, so `header_block() + separator() + body() == text()` always holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datapoint {
    id: usize,
    source_id: Option<usize>,
    text: String,
    header_end: usize,
    body_start: usize,
}

impl Datapoint {
    pub fn id(&self) -> usize {
        self.id
    }

    /// Id of this datapoint in the corpus it was sampled from, if any.
    pub fn source_id(&self) -> Option<usize> {
        self.source_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn header_block(&self) -> &str {
        &self.text[..self.header_end]
    }

    pub fn separator(&self) -> &str {
        &self.text[self.header_end..self.body_start]
    }

    pub fn body(&self) -> &str {
        &self.text[self.body_start..]
    }

    /// Byte length of the header block; offsets below it lie in the header.
    pub fn header_len(&self) -> usize {
        self.header_end
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub(crate) fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub(crate) fn with_source(mut self, source_id: Option<usize>) -> Self {
        self.source_id = source_id;
        self
    }

    /// Datapoint with the header dropped. The body is kept byte-exact and
    /// prefixed by a single blank line so that re-parsing the stored text
    /// yields the same empty header and the same body.
    pub(crate) fn without_header(&self) -> Self {
        let mut text = String::with_capacity(self.body().len() + 1);
        text.push('\n');
        text.push_str(self.body());
        Datapoint {
            id: self.id,
            source_id: self.source_id,
            text,
            header_end: 0,
            body_start: 1,
        }
    }
}

/// Splits a raw message into header block and body at the first blank line.
///
/// A message without any blank line has an empty header and the whole text
/// as body. A message starting with a blank line also has an empty header.
pub fn parse_message(raw: &str, id: usize) -> Datapoint {
    let (header_end, body_start) = if raw.starts_with('\n') {
        (0, 1)
    } else if let Some(pos) = raw.find("\n\n") {
        (pos, pos + 2)
    } else {
        (0, 0)
    };
    Datapoint {
        id,
        source_id: None,
        text: raw.to_owned(),
        header_end,
        body_start,
    }
}

/// An ordered collection of datapoints with ids `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    name: String,
    datapoints: Vec<Datapoint>,
}

impl Corpus {
    pub fn new(name: impl Into<String>) -> Self {
        Corpus {
            name: name.into(),
            datapoints: Vec::new(),
        }
    }

    /// Builds a corpus from raw message texts, assigning ids in order.
    pub fn from_texts<I, S>(name: impl Into<String>, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let datapoints = texts
            .into_iter()
            .enumerate()
            .map(|(id, t)| parse_message(t.as_ref(), id))
            .collect();
        Corpus {
            name: name.into(),
            datapoints,
        }
    }

    /// Builds a corpus from datapoints, re-assigning ids `0..len` in order.
    pub fn from_datapoints(name: impl Into<String>, datapoints: Vec<Datapoint>) -> Self {
        let datapoints = datapoints
            .into_iter()
            .enumerate()
            .map(|(id, dp)| dp.with_id(id))
            .collect();
        Corpus {
            name: name.into(),
            datapoints,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn push_text(&mut self, raw: &str) {
        let id = self.datapoints.len();
        self.datapoints.push(parse_message(raw, id));
    }

    pub fn datapoints(&self) -> &[Datapoint] {
        &self.datapoints
    }

    pub fn get(&self, id: usize) -> Option<&Datapoint> {
        self.datapoints.get(id)
    }

    pub fn len(&self) -> usize {
        self.datapoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datapoints.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Datapoint> {
        self.datapoints.iter()
    }

    /// Total size of all datapoint texts in bytes.
    pub fn byte_len(&self) -> usize {
        self.datapoints.iter().map(Datapoint::len).sum()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Datapoint;
    type IntoIter = std::slice::Iter<'a, Datapoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.datapoints.iter()
    }
}

/// Requested train/validation/test sizes and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_n: usize, val_n: usize, test_n: usize, seed: u64) -> Self {
        SplitSpec {
            train_n,
            val_n,
            test_n,
            seed,
        }
    }

    /// Largest 100:10:1 split that fits in `available` datapoints.
    pub fn ratio_100_10_1(available: usize, seed: u64) -> Self {
        let unit = available / 111;
        SplitSpec::new(100 * unit, 10 * unit, unit, seed)
    }

    pub fn total(&self) -> usize {
        self.train_n + self.val_n + self.test_n
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(10_000, 1_000, 100, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Draws disjoint random train/validation/test subsets by a seeded shuffle.
///
/// Each output is re-indexed from zero; the input id is kept as
/// [`Datapoint::source_id`].
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<Splits> {
    if spec.total() > corpus.len() {
        return Err(Error::SplitSize {
            requested: spec.total(),
            available: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let take = |ids: &[usize], label: &str| {
        let dps = ids
            .iter()
            .map(|&i| {
                let dp = &corpus.datapoints[i];
                dp.clone().with_source(Some(dp.id))
            })
            .collect();
        Corpus::from_datapoints(format!("{}.{}", corpus.name, label), dps)
    };

    let (train_ids, rest) = order.split_at(spec.train_n);
    let (val_ids, rest) = rest.split_at(spec.val_n);
    let test_ids = &rest[..spec.test_n];
    Ok(Splits {
        train: take(train_ids, "train"),
        val: take(val_ids, "val"),
        test: take(test_ids, "test"),
    })
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    id: usize,
    text: std::borrow::Cow<'a, str>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_id: Option<usize>,
}

/// Reads a JSONL corpus (`{"id": int, "text": string}` per line).
///
/// CRLF line endings, both in the file and inside texts, are normalized to
/// LF. Records are re-indexed in file order. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut datapoints = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let text = record.text.replace("\r\n", "\n");
        datapoints.push(parse_message(&text, record.id).with_source(record.source_id));
    }
    Ok(Corpus::from_datapoints(name, datapoints))
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for dp in corpus {
        let record = Record {
            id: dp.id,
            text: std::borrow::Cow::Borrowed(&dp.text),
            source_id: dp.source_id,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
