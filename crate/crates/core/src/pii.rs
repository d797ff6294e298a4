//! Structured email-address detection and the occurrence index table.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const EMAIL_PATTERN: &str = r"(?i)[a-z][a-z-]*\.[a-z][a-z-]*@(?:[a-z0-9-]+\.)+[a-z]{2,}";

fn email_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(EMAIL_PATTERN).expect("email pattern compiles"))
}

/// A `first.last@domain.tld` address in lowercase canonical form.
///
/// The host is split at its last dot: `kay.mann@mail.enron.com` has
/// domain `mail.enron` and tld `com`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmailAddress {
    canonical: String,
    first_end: usize,
    at: usize,
    tld_dot: usize,
}

impl EmailAddress {
    /// Builds an address from a first name, last name and host
    /// (`domain.tld`). Inputs are lowercased.
    pub fn from_parts(first: &str, last: &str, host: &str) -> Result<Self> {
        let canonical = format!("{first}.{last}@{host}").to_ascii_lowercase();
        if !is_name_part(first) || !is_name_part(last) || !is_host(host) {
            return Err(Error::InvalidEmail(canonical));
        }
        let first_end = first.len();
        let at = first_end + 1 + last.len();
        let tld_dot = canonical.rfind('.').expect("host has a dot");
        Ok(EmailAddress {
            canonical,
            first_end,
            at,
            tld_dot,
        })
    }

    pub fn first(&self) -> &str {
        &self.canonical[..self.first_end]
    }

    pub fn last(&self) -> &str {
        &self.canonical[self.first_end + 1..self.at]
    }

    /// Everything after the `@`, i.e. `domain.tld`.
    pub fn host(&self) -> &str {
        &self.canonical[self.at + 1..]
    }

    pub fn domain(&self) -> &str {
        &self.canonical[self.at + 1..self.tld_dot]
    }

    pub fn tld(&self) -> &str {
        &self.canonical[self.tld_dot + 1..]
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }
}

fn is_name_part(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_alphabetic())
        && bytes.all(|b| b.is_ascii_alphabetic() || b == b'-')
}

/// `label(.label)*.tld` with alphanumeric-or-hyphen labels and an
/// alphabetic tld of at least two letters.
pub fn is_host(s: &str) -> bool {
    let Some((domain, tld)) = s.rsplit_once('.') else {
        return false;
    };
    tld.len() >= 2
        && tld.bytes().all(|b| b.is_ascii_alphabetic())
        && domain
            .split('.')
            .all(|l| !l.is_empty() && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-'))
}

impl FromStr for EmailAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::InvalidEmail(s.to_owned());
        let (local, host) = s.split_once('@').ok_or_else(invalid)?;
        let (first, last) = local.split_once('.').ok_or_else(invalid)?;
        EmailAddress::from_parts(first, last, host).map_err(|_| invalid())
    }
}

impl fmt::Display for EmailAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

impl Serialize for EmailAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical)
    }
}

impl<'de> Deserialize<'de> for EmailAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A detected address and its byte span in the scanned text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmailMatch {
    pub start: usize,
    pub end: usize,
    pub email: EmailAddress,
}

fn continues_address_before(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | '_' | '%' | '+' | '-' | '@' | '\'')
}

fn continues_address_after(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '@')
}

/// Finds `first.last@domain.tld` addresses left to right.
///
/// Candidates glued to surrounding address characters (for example the
/// `jane.smith@x.org` inside `mary.jane.smith@x.org`) are rejected.
pub fn detect_emails(text: &str) -> Vec<EmailMatch> {
    let re = email_regex();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(m) = re.find_at(text, from) {
        let guarded_before = text[..m.start()]
            .chars()
            .next_back()
            .is_some_and(continues_address_before);
        let guarded_after = text[m.end()..]
            .chars()
            .next()
            .is_some_and(continues_address_after);
        if guarded_before || guarded_after {
            // retry one character later; the next candidate may start inside
            from = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
            continue;
        }
        let email = m
            .as_str()
            .to_ascii_lowercase()
            .parse()
            .expect("regex match is a valid address");
        out.push(EmailMatch {
            start: m.start(),
            end: m.end(),
            email,
        });
        from = m.end();
    }
    out
}

/// One row of the index table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceRecord {
    pub datapoint_id: usize,
    pub start: usize,
    pub end: usize,
    pub email: EmailAddress,
    pub in_header: bool,
}

/// Every structured email occurrence in a corpus, sorted by
/// `(datapoint_id, start)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexTable {
    rows: Vec<OccurrenceRecord>,
}

impl IndexTable {
    /// Wraps rows, sorting them by `(datapoint_id, start)`.
    pub fn from_rows(mut rows: Vec<OccurrenceRecord>) -> Self {
        rows.sort_by_key(|r| (r.datapoint_id, r.start));
        IndexTable { rows }
    }

    pub fn rows(&self) -> &[OccurrenceRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header_rows(&self) -> impl Iterator<Item = &OccurrenceRecord> {
        self.rows.iter().filter(|r| r.in_header)
    }

    /// Occurrence count per canonical email.
    pub fn counts(&self) -> HashMap<&EmailAddress, usize> {
        let mut counts = HashMap::new();
        for row in &self.rows {
            *counts.entry(&row.email).or_insert(0) += 1;
        }
        counts
    }

    /// Highest occurrence count of any single email, 0 for an empty table.
    pub fn max_count(&self) -> usize {
        self.counts().into_values().max().unwrap_or(0)
    }

    /// Writes `datapoint_id,start,end,email,in_header` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["datapoint_id", "start", "end", "email", "in_header"])?;
        for r in &self.rows {
            w.write_record([
                r.datapoint_id.to_string(),
                r.start.to_string(),
                r.end.to_string(),
                r.email.to_string(),
                r.in_header.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Detects emails in every datapoint and merges them into one sorted table.
pub fn build_index_table(corpus: &Corpus) -> IndexTable {
    let rows = corpus
        .datapoints()
        .par_iter()
        .flat_map_iter(|dp| {
            let header_len = dp.header_len();
            detect_emails(dp.text())
                .into_iter()
                .map(move |m| OccurrenceRecord {
                    datapoint_id: dp.id(),
                    start: m.start,
                    end: m.end,
                    in_header: m.start < header_len,
                    email: m.email,
                })
        })
        .collect();
    IndexTable::from_rows(rows)
}

/// Most frequent emails, descending by count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyReport {
    pub entries: Vec<(EmailAddress, usize)>,
}

impl FrequencyReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "email", "count"])?;
        for (rank, (email, count)) in self.entries.iter().enumerate() {
            w.write_record([(rank + 1).to_string(), email.to_string(), count.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Top `k` emails by occurrence count; ties go to the smaller canonical form.
pub fn frequency_report(table: &IndexTable, k: usize) -> FrequencyReport {
    let mut entries: Vec<(EmailAddress, usize)> = table
        .counts()
        .into_iter()
        .map(|(e, c)| (e.clone(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(k);
    FrequencyReport { entries }
}

pub fn unique_emails(table: &IndexTable) -> BTreeSet<EmailAddress> {
    table.rows.iter().map(|r| r.email.clone()).collect()
}

/// Emails present in both tables (cross-split leakage in the raw data).
pub fn overlapping_emails(a: &IndexTable, b: &IndexTable) -> BTreeSet<EmailAddress> {
    let a = unique_emails(a);
    unique_emails(b)
        .into_iter()
        .filter(|e| a.contains(e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn email(s: &str) -> EmailAddress {
        s.parse().unwrap()
    }

    fn canon(text: &str) -> Vec<String> {
        detect_emails(text)
            .into_iter()
            .map(|m| m.email.to_string())
            .collect()
    }

    #[test]
    fn detects_header_address() {
        let found = detect_emails("From: kay.mann@enron.com");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].email.canonical(), "kay.mann@enron.com");
        assert_eq!((found[0].start, found[0].end), (6, 24));
    }

    #[test]
    fn nothing_to_detect() {
        assert!(detect_emails("no addresses here").is_empty());
    }

    #[test]
    fn only_first_last_form_counts() {
        assert_eq!(
            canon("a@b.c john.doe@x.org jane@y.net"),
            vec!["john.doe@x.org"]
        );
    }

    #[test]
    fn case_is_folded() {
        assert_eq!(canon("Kay.Mann@ENRON.com"), vec!["kay.mann@enron.com"]);
    }

    #[test]
    fn word_boundaries_are_enforced() {
        assert!(canon("mary.jane.smith@x.org").is_empty());
        assert!(canon("3kay.mann@enron.com").is_empty());
        assert!(canon("kay.mann@enron.com2").is_empty());
        assert!(canon("x_kay.mann@enron.com").is_empty());
        assert_eq!(
            canon("<kay.mann@enron.com>, (john.doe@x.org)."),
            vec!["kay.mann@enron.com", "john.doe@x.org"]
        );
        assert_eq!(canon("caf\u{e9} kay.mann@enron.com"), vec!["kay.mann@enron.com"]);
    }

    #[test]
    fn multi_label_host_splits_at_last_dot() {
        let e = &detect_emails("to kay.mann@mail.enron.com.")[0].email;
        assert_eq!(e.domain(), "mail.enron");
        assert_eq!(e.tld(), "com");
        assert_eq!(e.host(), "mail.enron.com");
        let e = email("suzanne.adams@att.net");
        assert_eq!(
            (e.first(), e.last(), e.domain(), e.tld()),
            ("suzanne", "adams", "att", "net")
        );
    }

    #[test]
    fn parse_rejects_malformed() {
        for bad in ["kay@enron.com", "kay.mann@enron", "kay.mann@enron.c", "1kay.mann@x.org", ""] {
            assert!(bad.parse::<EmailAddress>().is_err(), "{bad}");
        }
    }

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_texts("t", texts)
    }

    #[test]
    fn index_counts_are_additive() {
        let text = "From: a.b@x.com\nTo: c.d@y.org\n\nping e.f@z.net";
        let t = build_index_table(&corpus(&[text, text]));
        assert_eq!(t.len(), 6);
        assert_eq!(t.header_rows().count(), 4);
        let keys: Vec<_> = t.rows().iter().map(|r| (r.datapoint_id, r.start)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn empty_corpus_empty_table() {
        assert!(build_index_table(&Corpus::new("e")).is_empty());
    }

    #[test]
    fn repeated_email_count() {
        let texts: Vec<String> = (0..900)
            .map(|i| format!("From: kay.mann@enron.com\nTo: p{}.q@r.com\n\nhi", "x".repeat(i % 3)))
            .collect();
        let t = build_index_table(&Corpus::from_texts("t", &texts));
        assert_eq!(t.counts()[&email("kay.mann@enron.com")], 900);
        let report = frequency_report(&t, 1);
        assert_eq!(report.entries[0], (email("kay.mann@enron.com"), 900));
    }

    fn table_from(emails: &[&str]) -> IndexTable {
        let rows = emails
            .iter()
            .enumerate()
            .map(|(i, e)| OccurrenceRecord {
                datapoint_id: i,
                start: 0,
                end: e.len(),
                email: email(e),
                in_header: true,
            })
            .collect();
        IndexTable::from_rows(rows)
    }

    #[test]
    fn frequency_top_k() {
        let mut list = vec!["a.a@x.com"; 5];
        list.extend(vec!["b.b@x.com"; 3]);
        list.push("c.c@x.com");
        let r = frequency_report(&table_from(&list), 2);
        assert_eq!(
            r.entries,
            vec![(email("a.a@x.com"), 5), (email("b.b@x.com"), 3)]
        );
        assert!(frequency_report(&table_from(&list), 0).entries.is_empty());
    }

    #[test]
    fn frequency_ties_prefer_smaller_canonical() {
        let forward = [vec!["a.a@x.com"; 4], vec!["b.b@x.com"; 4]].concat();
        let backward = [vec!["b.b@x.com"; 4], vec!["a.a@x.com"; 4]].concat();
        for list in [forward, backward] {
            let r = frequency_report(&table_from(&list), 1);
            assert_eq!(r.entries, vec![(email("a.a@x.com"), 4)]);
        }
    }

    #[test]
    fn unique_set() {
        let u = unique_emails(&table_from(&["a.a@x.com", "a.a@x.com", "b.b@x.com"]));
        assert_eq!(u.len(), 2);
        assert!(unique_emails(&IndexTable::default()).is_empty());
    }

    #[test]
    fn csv_export_columns() {
        let t = build_index_table(&corpus(&["From: \"Mann, Kay\" kay.mann@enron.com\n\nx"]));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "datapoint_id,start,end,email,in_header\n0,18,36,kay.mann@enron.com,true\n"
        );
    }

    #[test]
    fn overlap_between_tables() {
        let a = table_from(&["a.a@x.com", "b.b@x.com"]);
        let b = table_from(&["b.b@x.com", "c.c@x.com"]);
        assert_eq!(
            overlapping_emails(&a, &b).into_iter().collect::<Vec<_>>(),
            vec![email("b.b@x.com")]
        );
    }

    fn address() -> impl Strategy<Value = String> {
        ("[a-zA-Z][a-zA-Z-]{0,5}", "[a-zA-Z][a-zA-Z-]{0,5}", "[a-z0-9-]{1,5}", "[a-zA-Z]{2,4}")
            .prop_map(|(f, l, d, t)| format!("{f}.{l}@{d}.{t}"))
    }

    proptest! {
        #[test]
        fn spans_reparse_to_their_email(
            parts in proptest::collection::vec((address(), "[ ,;:<>()\\n]{1,3}[a-z ]{0,6}[ ,;\\n]"), 0..6)
        ) {
            let text: String = parts.iter().map(|(a, s)| format!("{a}{s}")).collect();
            let found = detect_emails(&text);
            prop_assert_eq!(found.len(), parts.len());
            for m in &found {
                let reparsed: EmailAddress = text[m.start..m.end].to_ascii_lowercase().parse().unwrap();
                prop_assert_eq!(&reparsed, &m.email);
            }
            for w in found.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
        }

        #[test]
        fn detection_idempotent_under_canonicalization(text in "[a-zA-Z.@ ,\\-]{0,120}") {
            let first: Vec<String> = canon(&text);
            let rebuilt = first.join(" ");
            prop_assert_eq!(canon(&rebuilt), first);
        }

        #[test]
        fn canonical_round_trips(a in address()) {
            let e: EmailAddress = a.parse().unwrap();
            let again: EmailAddress = e.canonical().parse().unwrap();
            prop_assert_eq!(again, e);
        }
    }
}
