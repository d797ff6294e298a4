//! Randomized masking: keep the first occurrence of every email and replace
//! each later occurrence with a fresh, structurally consistent address that
//! shares one anchored part with the original.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_message, Corpus, Datapoint};
use crate::error::{Error, Result};
use crate::pii::{is_host, EmailAddress, IndexTable, OccurrenceRecord};

/// Resampling budget per replaced row.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 1_000;

/// Distinct email parts available to the replacement generator, each in
/// sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartStores {
    first_names: Vec<String>,
    last_names: Vec<String>,
    hosts: Vec<String>,
}

impl PartStores {
    pub fn new<F, L, H>(first_names: F, last_names: L, hosts: H) -> Result<Self>
    where
        F: IntoIterator<Item = String>,
        L: IntoIterator<Item = String>,
        H: IntoIterator<Item = String>,
    {
        let first: BTreeSet<String> = first_names.into_iter().collect();
        let last: BTreeSet<String> = last_names.into_iter().collect();
        let hosts: BTreeSet<String> = hosts.into_iter().collect();
        if first.is_empty() {
            return Err(Error::EmptyStore("first names"));
        }
        if last.is_empty() {
            return Err(Error::EmptyStore("last names"));
        }
        if hosts.is_empty() {
            return Err(Error::EmptyStore("hosts"));
        }
        if let Some(bad) = hosts.iter().find(|h| !is_host(h)) {
            return Err(Error::InvalidHost(bad.clone()));
        }
        Ok(PartStores {
            first_names: first.into_iter().collect(),
            last_names: last.into_iter().collect(),
            hosts: hosts.into_iter().collect(),
        })
    }

    pub fn first_names(&self) -> &[String] {
        &self.first_names
    }

    pub fn last_names(&self) -> &[String] {
        &self.last_names
    }

    pub fn hosts(&self) -> &[String] {
        &self.hosts
    }

    /// Number of distinct addresses the stores can produce.
    pub fn capacity(&self) -> usize {
        self.first_names.len() * self.last_names.len() * self.hosts.len()
    }
}

/// Collects name parts from the table's emails and hosts from the table
/// plus `extra_hosts`.
pub fn build_part_stores<S: AsRef<str>>(table: &IndexTable, extra_hosts: &[S]) -> Result<PartStores> {
    let mut hosts: BTreeSet<String> = extra_hosts
        .iter()
        .map(|h| h.as_ref().trim().to_ascii_lowercase())
        .collect();
    if let Some(bad) = hosts.iter().find(|h| !is_host(h)) {
        return Err(Error::InvalidHost(bad.clone()));
    }
    let rows = table.rows();
    hosts.extend(rows.iter().map(|r| r.email.host().to_owned()));
    PartStores::new(
        rows.iter().map(|r| r.email.first().to_owned()),
        rows.iter().map(|r| r.email.last().to_owned()),
        hosts,
    )
}

/// Reads a curated host list: one `domain.tld` per line, `#` comments and
/// blank lines ignored.
pub fn load_host_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hosts = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let host = line.trim();
        if host.is_empty() || host.starts_with('#') {
            continue;
        }
        let host = host.to_ascii_lowercase();
        if !is_host(&host) {
            return Err(Error::InvalidHost(host));
        }
        hosts.push(host);
    }
    Ok(hosts)
}

/// The part of an address kept fixed during replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    First,
    Last,
    Domain,
}

impl Anchor {
    pub const ALL: [Anchor; 3] = [Anchor::First, Anchor::Last, Anchor::Domain];

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Anchor::ALL[rng.gen_range(0..Anchor::ALL.len())]
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Anchor::First => "first",
            Anchor::Last => "last",
            Anchor::Domain => "domain",
        })
    }
}

fn pick<'a, R: Rng + ?Sized>(items: &'a [String], rng: &mut R) -> &'a str {
    &items[rng.gen_range(0..items.len())]
}

/// Keeps the anchored part of `orig` and draws the other two uniformly from
/// the stores (first, then last, then host, skipping the anchored one).
pub fn generate_replacement<R: Rng + ?Sized>(
    orig: &EmailAddress,
    anchor: Anchor,
    stores: &PartStores,
    rng: &mut R,
) -> EmailAddress {
    let (first, last, host) = match anchor {
        Anchor::First => {
            let last = pick(&stores.last_names, rng);
            (orig.first(), last, pick(&stores.hosts, rng))
        }
        Anchor::Last => {
            let first = pick(&stores.first_names, rng);
            (first, orig.last(), pick(&stores.hosts, rng))
        }
        Anchor::Domain => {
            let first = pick(&stores.first_names, rng);
            (first, pick(&stores.last_names, rng), orig.host())
        }
    };
    EmailAddress::from_parts(first, last, host).expect("store parts form a valid address")
}

/// RNG for one plan row; depends only on the seed and the row ordinal.
pub fn row_rng(seed: u64, ordinal: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(ordinal as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum Decision {
    Keep,
    Replace { email: EmailAddress, anchor: Anchor },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedRow {
    pub row: OccurrenceRecord,
    pub decision: Decision,
}

/// Keep/replace decisions aligned with the index table rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub seed: u64,
    pub entries: Vec<PlannedRow>,
}

impl MaskPlan {
    pub fn replaced(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.decision, Decision::Replace { .. }))
            .count()
    }

    /// Writes `datapoint_id,start,end,original,decision,replacement,anchor`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "datapoint_id",
            "start",
            "end",
            "original",
            "decision",
            "replacement",
            "anchor",
        ])?;
        for e in &self.entries {
            let (decision, replacement, anchor) = match &e.decision {
                Decision::Keep => ("keep", String::new(), String::new()),
                Decision::Replace { email, anchor } => {
                    ("replace", email.to_string(), anchor.to_string())
                }
            };
            w.write_record([
                e.row.datapoint_id.to_string(),
                e.row.start.to_string(),
                e.row.end.to_string(),
                e.row.email.to_string(),
                decision.to_owned(),
                replacement,
                anchor,
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Plans the masking of every non-first occurrence.
///
/// Replacements are rejection-sampled until they differ from every original
/// email and from every earlier replacement. Each attempt redraws both the
/// anchor and the free parts from the row's own RNG stream.
pub fn plan_masks(table: &IndexTable, stores: &PartStores, seed: u64) -> Result<MaskPlan> {
    let mut taken: HashSet<String> = table
        .rows()
        .iter()
        .map(|r| r.email.canonical().to_owned())
        .collect();
    let mut seen: HashSet<&EmailAddress> = HashSet::new();
    let mut entries = Vec::with_capacity(table.len());

    for (ordinal, row) in table.rows().iter().enumerate() {
        if seen.insert(&row.email) {
            entries.push(PlannedRow {
                row: row.clone(),
                decision: Decision::Keep,
            });
            continue;
        }
        let mut rng = row_rng(seed, ordinal);
        let mut chosen = None;
        for _ in 0..MAX_RESAMPLE_ATTEMPTS {
            let anchor = Anchor::random(&mut rng);
            let candidate = generate_replacement(&row.email, anchor, stores, &mut rng);
            if !taken.contains(candidate.canonical()) {
                chosen = Some((candidate, anchor));
                break;
            }
        }
        let (email, anchor) = chosen.ok_or(Error::ReplacementExhausted {
            row: ordinal,
            attempts: MAX_RESAMPLE_ATTEMPTS,
        })?;
        taken.insert(email.canonical().to_owned());
        entries.push(PlannedRow {
            row: row.clone(),
            decision: Decision::Replace { email, anchor },
        });
    }
    Ok(MaskPlan { seed, entries })
}

/// One applied replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub datapoint_id: usize,
    pub old_span: (usize, usize),
    pub new_span: (usize, usize),
    pub old_email: EmailAddress,
    pub new_email: EmailAddress,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedCorpus {
    pub corpus: Corpus,
    pub provenance: Vec<Provenance>,
}

impl MaskedCorpus {
    /// One JSON object per provenance record.
    pub fn write_provenance_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for p in &self.provenance {
            serde_json::to_writer(&mut writer, p)?;
            writer
                .write_all(b"\n")
                .map_err(|e| Error::io("<provenance>", e))?;
        }
        Ok(())
    }
}

fn check_span(dp: &Datapoint, row: &OccurrenceRecord) -> Result<()> {
    let mismatch = || Error::SpanMismatch {
        datapoint_id: row.datapoint_id,
        start: row.start,
        end: row.end,
        expected: row.email.to_string(),
    };
    let found = dp.text().get(row.start..row.end).ok_or_else(mismatch)?;
    match found.to_ascii_lowercase().parse::<EmailAddress>() {
        Ok(e) if e == row.email => Ok(()),
        _ => Err(mismatch()),
    }
}

fn rewrite(dp: &Datapoint, rows: &[PlannedRow]) -> Result<(Datapoint, Vec<Provenance>)> {
    let text = dp.text();
    let mut out = String::with_capacity(text.len());
    let mut provenance = Vec::new();
    let mut cursor = 0;
    for entry in rows {
        let row = &entry.row;
        check_span(dp, row)?;
        if row.start < cursor {
            return Err(Error::PlanMismatch(format!(
                "overlapping spans in datapoint {}",
                row.datapoint_id
            )));
        }
        let Decision::Replace { email, anchor } = &entry.decision else {
            continue;
        };
        out.push_str(&text[cursor..row.start]);
        let new_start = out.len();
        out.push_str(email.canonical());
        provenance.push(Provenance {
            datapoint_id: row.datapoint_id,
            old_span: (row.start, row.end),
            new_span: (new_start, out.len()),
            old_email: row.email.clone(),
            new_email: email.clone(),
            anchor: *anchor,
        });
        cursor = row.end;
    }
    out.push_str(&text[cursor..]);
    let rewritten = parse_message(&out, dp.id()).with_source(dp.source_id());
    Ok((rewritten, provenance))
}

/// Substitutes every planned replacement at its recorded span.
///
/// Non-email bytes are untouched; provenance spans refer to the input text
/// (`old_span`) and the output text (`new_span`).
pub fn apply_masks(corpus: &Corpus, plan: &MaskPlan) -> Result<MaskedCorpus> {
    let mut by_id: Vec<Option<&[PlannedRow]>> = vec![None; corpus.len()];
    let mut rest = plan.entries.as_slice();
    let mut previous = None;
    while let Some(first) = rest.first() {
        let id = first.row.datapoint_id;
        if previous.is_some_and(|p| p >= id) {
            return Err(Error::PlanMismatch("rows are not sorted by datapoint".into()));
        }
        let slot = by_id
            .get_mut(id)
            .ok_or_else(|| Error::PlanMismatch(format!("datapoint {id} not in corpus")))?;
        let len = rest.iter().take_while(|e| e.row.datapoint_id == id).count();
        let (group, tail) = rest.split_at(len);
        *slot = Some(group);
        previous = Some(id);
        rest = tail;
    }

    let results: Vec<(Datapoint, Vec<Provenance>)> = corpus
        .datapoints()
        .par_iter()
        .zip(by_id.par_iter())
        .map(|(dp, rows)| match rows {
            Some(rows) => rewrite(dp, rows),
            None => Ok((dp.clone(), Vec::new())),
        })
        .collect::<Result<_>>()?;

    let mut datapoints = Vec::with_capacity(results.len());
    let mut provenance = Vec::new();
    for (dp, p) in results {
        datapoints.push(dp);
        provenance.extend(p);
    }
    let mut masked = Corpus::from_datapoints(corpus.name(), datapoints);
    masked.set_name(format!("{}.rmft", corpus.name()));
    Ok(MaskedCorpus {
        corpus: masked,
        provenance,
    })
}
