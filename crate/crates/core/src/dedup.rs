//! PII-aware deduplication: drop every header block that repeats an email
//! already seen in an earlier header, keep all bodies.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::pii::{EmailAddress, IndexTable};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DedupReport {
    /// Datapoints whose header block was removed, ascending.
    pub removed_headers: Vec<usize>,
    /// Datapoints that kept their header block.
    pub retained: usize,
    /// Emails that occurred in at least one removed header block.
    pub emails_eliminated: BTreeSet<EmailAddress>,
}

/// Removes header blocks containing a repeated email.
///
/// Header occurrences are scanned in `(datapoint_id, start)` order; an
/// occurrence is repeated when its email was already met in an earlier header
/// occurrence, including one inside the same header or a header that is
/// itself removed. `table` must be the index of `corpus`.
pub fn dedup_corpus(corpus: &Corpus, table: &IndexTable) -> (Corpus, DedupReport) {
    let mut seen: HashSet<&EmailAddress> = HashSet::new();
    let mut strip = vec![false; corpus.len()];
    for row in table.header_rows() {
        if !seen.insert(&row.email) {
            strip[row.datapoint_id] = true;
        }
    }

    let mut eliminated = BTreeSet::new();
    for row in table.header_rows().filter(|r| strip[r.datapoint_id]) {
        eliminated.insert(row.email.clone());
    }

    let datapoints = corpus
        .iter()
        .zip(&strip)
        .map(|(dp, &s)| if s { dp.without_header() } else { dp.clone() })
        .collect();
    let removed_headers: Vec<usize> = (0..corpus.len()).filter(|&i| strip[i]).collect();
    let report = DedupReport {
        retained: corpus.len() - removed_headers.len(),
        removed_headers,
        emails_eliminated: eliminated,
    };
    let mut out = Corpus::from_datapoints(corpus.name(), datapoints);
    out.set_name(format!("{}.dedup", corpus.name()));
    (out, report)
}
