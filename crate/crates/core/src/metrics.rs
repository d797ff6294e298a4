//! Leak extraction and the memorization/utility metrics: total extraction
//! rate, seen extraction rate and mean delta perplexity.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memproxy::CheckpointArtifact;
use crate::pii::{detect_emails, EmailAddress, IndexTable};

macro_rules! email_set {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
        pub struct $name(pub BTreeSet<EmailAddress>);

        impl $name {
            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn contains(&self, email: &EmailAddress) -> bool {
                self.0.contains(email)
            }

            pub fn iter(&self) -> std::collections::btree_set::Iter<'_, EmailAddress> {
                self.0.iter()
            }
        }

        impl FromIterator<EmailAddress> for $name {
            fn from_iter<I: IntoIterator<Item = EmailAddress>>(iter: I) -> Self {
                $name(iter.into_iter().collect())
            }
        }
    };
}

email_set!(
    /// Unique emails of the unmodified training corpus.
    OriginalEmailSet
);
email_set!(
    /// Original emails reproduced verbatim in a checkpoint's generations.
    LeakSet
);
email_set!(
    /// Emails present in the training data consumed up to a checkpoint.
    SeenSet
);

impl OriginalEmailSet {
    pub fn from_table(table: &IndexTable) -> Self {
        table.rows().iter().map(|r| r.email.clone()).collect()
    }
}

/// Detected emails across all generations that belong to the original set.
pub fn extract_leaks<S: AsRef<str>>(generations: &[S], og: &OriginalEmailSet) -> LeakSet {
    generations
        .iter()
        .flat_map(|g| detect_emails(g.as_ref()))
        .map(|m| m.email)
        .filter(|e| og.contains(e))
        .collect()
}

/// `100 * |leak| / |og|`.
pub fn compute_ter(leak: &LeakSet, og: &OriginalEmailSet) -> Result<f64> {
    if og.is_empty() {
        return Err(Error::EmptyOriginalSet);
    }
    Ok(100.0 * leak.len() as f64 / og.len() as f64)
}

/// `100 * |leak| / |seen|`.
pub fn compute_ser(leak: &LeakSet, seen: &SeenSet) -> Result<f64> {
    if seen.is_empty() {
        return Err(Error::EmptySeenSet);
    }
    Ok(100.0 * leak.len() as f64 / seen.len() as f64)
}

/// Cumulative emails seen at each checkpoint.
///
/// `table` indexes the corpus the checkpoints were trained on. Checkpoints
/// must be in ascending index order with nested seen-datapoint sets.
pub fn compute_seen_sets(checkpoints: &[CheckpointArtifact], table: &IndexTable) -> Result<Vec<SeenSet>> {
    let mut by_datapoint: HashMap<usize, Vec<&EmailAddress>> = HashMap::new();
    for r in table.rows() {
        by_datapoint.entry(r.datapoint_id).or_default().push(&r.email);
    }

    let mut out = Vec::with_capacity(checkpoints.len());
    let mut cumulative = BTreeSet::new();
    let mut previous: Option<(&CheckpointArtifact, BTreeSet<usize>)> = None;
    for ckpt in checkpoints {
        let ids: BTreeSet<usize> = ckpt.seen_datapoint_ids.iter().copied().collect();
        if let Some((prev, prev_ids)) = &previous {
            if ckpt.checkpoint_index <= prev.checkpoint_index {
                return Err(Error::CheckpointOrder(format!(
                    "checkpoint {} follows {}",
                    ckpt.checkpoint_index, prev.checkpoint_index
                )));
            }
            if !prev_ids.is_subset(&ids) {
                return Err(Error::CheckpointOrder(format!(
                    "checkpoint {} has not seen all data of checkpoint {}",
                    ckpt.checkpoint_index, prev.checkpoint_index
                )));
            }
        }
        for id in &ids {
            if let Some(emails) = by_datapoint.get(id) {
                cumulative.extend(emails.iter().map(|&e| e.clone()));
            }
        }
        out.push(SeenSet(cumulative.clone()));
        previous = Some((ckpt, ids));
    }
    Ok(out)
}

/// `mean_i(treatment_i - baseline_i)` over positionally aligned prompts.
pub fn compute_mdp(treatment: &[f64], baseline: &[f64]) -> Result<f64> {
    if treatment.len() != baseline.len() {
        return Err(Error::LengthMismatch {
            treatment: treatment.len(),
            baseline: baseline.len(),
        });
    }
    if treatment.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sum: f64 = treatment.iter().zip(baseline).map(|(t, b)| t - b).sum();
    Ok(sum / treatment.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub checkpoint_index: usize,
    /// Total extraction rate, percent.
    pub ter: f64,
    /// Seen extraction rate, percent.
    pub ser: f64,
    /// Mean delta perplexity against the baseline run.
    pub mdp: f64,
    pub avg_ppl: f64,
}

/// Run-level means over all checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ter: f64,
    pub ser: f64,
    pub mdp: f64,
    pub avg_ppl: f64,
}

pub fn summarize(series: &[CheckpointMetrics]) -> Result<Summary> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = series.len() as f64;
    let mean = |f: fn(&CheckpointMetrics) -> f64| series.iter().map(f).sum::<f64>() / n;
    Ok(Summary {
        ter: mean(|m| m.ter),
        ser: mean(|m| m.ser),
        mdp: mean(|m| m.mdp),
        avg_ppl: mean(|m| m.avg_ppl),
    })
}

/// Per-checkpoint metrics of one technique.
///
/// `baseline` supplies the per-prompt perplexities MDP is measured against,
/// paired by checkpoint index; pass the run's own artifacts for the baseline
/// itself. `training_table` indexes the technique's training corpus and is
/// restricted to `og` before seen sets are formed.
pub fn evaluate_run(
    artifacts: &[CheckpointArtifact],
    baseline: &[CheckpointArtifact],
    og: &OriginalEmailSet,
    training_table: &IndexTable,
) -> Result<Vec<CheckpointMetrics>> {
    let original_only = IndexTable::from_rows(
        training_table
            .rows()
            .iter()
            .filter(|r| og.contains(&r.email))
            .cloned()
            .collect(),
    );
    let seen = compute_seen_sets(artifacts, &original_only)?;
    let baseline_by_index: HashMap<usize, &CheckpointArtifact> =
        baseline.iter().map(|a| (a.checkpoint_index, a)).collect();

    artifacts
        .iter()
        .zip(&seen)
        .map(|(a, seen)| {
            let base = baseline_by_index.get(&a.checkpoint_index).ok_or_else(|| {
                Error::CheckpointOrder(format!("baseline has no checkpoint {}", a.checkpoint_index))
            })?;
            let leaks = extract_leaks(&a.generations, og);
            Ok(CheckpointMetrics {
                checkpoint_index: a.checkpoint_index,
                ter: compute_ter(&leaks, og)?,
                ser: compute_ser(&leaks, seen)?,
                mdp: compute_mdp(&a.per_prompt_perplexity, &base.per_prompt_perplexity)?,
                avg_ppl: a.average_perplexity().ok_or(Error::EmptySeries)?,
            })
        })
        .collect()
}

/// `checkpoint,ter,ser,mdp,avg_ppl` rows.
pub fn write_series_csv<W: Write>(series: &[CheckpointMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["checkpoint", "ter", "ser", "mdp", "avg_ppl"])?;
    for m in series {
        w.write_record([
            m.checkpoint_index.to_string(),
            m.ter.to_string(),
            m.ser.to_string(),
            m.mdp.to_string(),
            m.avg_ppl.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_series_csv<R: std::io::Read>(reader: R) -> Result<Vec<CheckpointMetrics>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize::<(usize, f64, f64, f64, f64)>() {
        let (checkpoint_index, ter, ser, mdp, avg_ppl) = rec?;
        out.push(CheckpointMetrics {
            checkpoint_index,
            ter,
            ser,
            mdp,
            avg_ppl,
        });
    }
    Ok(out)
}

/// Summary table with one row per technique: `technique,ppl,ter,ser`.
pub fn write_summary_csv<W: Write>(rows: &[(String, Summary)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["technique", "ppl", "ter", "ser"])?;
    for (technique, s) in rows {
        w.write_record([
            technique.clone(),
            s.avg_ppl.to_string(),
            s.ter.to_string(),
            s.ser.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::pii::build_index_table;
    use proptest::prelude::*;

    fn email(s: &str) -> EmailAddress {
        s.parse().unwrap()
    }

    fn og(list: &[&str]) -> OriginalEmailSet {
        list.iter().map(|s| email(s)).collect()
    }

    #[test]
    fn leaks_are_validated_against_original_set() {
        let og = og(&["kay.mann@enron.com", "suzanne.adams@att.net"]);
        let leaks = extract_leaks(&["mail kay.mann@enron.com now"], &og);
        assert_eq!(leaks, LeakSet([email("kay.mann@enron.com")].into()));
        assert!(extract_leaks(&["bob.mann@yahoo.org"], &og).is_empty());
        let twice = extract_leaks(&["kay.mann@enron.com", "x KAY.MANN@enron.com"], &og);
        assert_eq!(twice.len(), 1);
    }

    #[test]
    fn ter_values() {
        let set = og(&["a.a@x.com", "b.b@x.com"]);
        assert_eq!(compute_ter(&LeakSet::default(), &set).unwrap(), 0.0);
        let all = LeakSet(set.0.clone());
        assert_eq!(compute_ter(&all, &set).unwrap(), 100.0);
        assert!(matches!(
            compute_ter(&all, &OriginalEmailSet::default()),
            Err(Error::EmptyOriginalSet)
        ));
    }

    #[test]
    fn ter_over_large_original_set() {
        let big: OriginalEmailSet = (0..24_480)
            .map(|i| email(&format!("n{}.x@y.com", to_letters(i))))
            .collect();
        let leak: LeakSet = big.iter().take(3).cloned().collect();
        let ter = compute_ter(&leak, &big).unwrap();
        assert!((ter - 300.0 / 24_480.0).abs() < 1e-12);
        assert!((ter - 0.012_254_9).abs() < 1e-7);
    }

    fn to_letters(mut i: usize) -> String {
        let mut s = String::new();
        loop {
            s.push(char::from(b'a' + (i % 26) as u8));
            i /= 26;
            if i == 0 {
                return s;
            }
        }
    }

    #[test]
    fn ser_values() {
        let seen = SeenSet(og(&["a.a@x.com", "b.b@x.com", "c.c@x.com", "d.d@x.com"]).0);
        assert_eq!(compute_ser(&LeakSet::default(), &seen).unwrap(), 0.0);
        let one = LeakSet([email("a.a@x.com")].into());
        assert_eq!(compute_ser(&one, &seen).unwrap(), 25.0);
        assert_eq!(compute_ser(&LeakSet(seen.0.clone()), &seen).unwrap(), 100.0);
        assert!(matches!(
            compute_ser(&one, &SeenSet::default()),
            Err(Error::EmptySeenSet)
        ));
    }

    fn artifact(index: usize, seen: &[usize]) -> CheckpointArtifact {
        CheckpointArtifact {
            checkpoint_index: index,
            seen_datapoint_ids: seen.to_vec(),
            generations: vec![],
            per_prompt_perplexity: vec![1.0],
        }
    }

    #[test]
    fn seen_sets_accumulate() {
        let c = Corpus::from_texts("s", ["From: a.a@x.com\n\nhi", "To: b.b@x.com\n\nyo", "nothing"]);
        let t = build_index_table(&c);
        let sets = compute_seen_sets(&[artifact(1, &[0]), artifact(2, &[0, 1]), artifact(3, &[0, 1, 2])], &t)
            .unwrap();
        assert_eq!(sets[0], SeenSet(og(&["a.a@x.com"]).0));
        assert_eq!(sets[1], SeenSet(og(&["a.a@x.com", "b.b@x.com"]).0));
        assert_eq!(sets[2], sets[1]);

        let unordered = compute_seen_sets(&[artifact(2, &[0]), artifact(1, &[0])], &t);
        assert!(matches!(unordered, Err(Error::CheckpointOrder(_))));
        let shrinking = compute_seen_sets(&[artifact(1, &[0, 1]), artifact(2, &[1])], &t);
        assert!(matches!(shrinking, Err(Error::CheckpointOrder(_))));
    }

    #[test]
    fn mdp_values() {
        assert_eq!(compute_mdp(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(compute_mdp(&[7.0, 9.0], &[6.0, 8.0]).unwrap(), 1.0);
        assert_eq!(compute_mdp(&[5.0], &[6.0]).unwrap(), -1.0);
        assert!(matches!(
            compute_mdp(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { treatment: 1, baseline: 2 })
        ));
        assert!(compute_mdp(&[], &[]).is_err());
    }

    fn metrics(i: usize, ter: f64) -> CheckpointMetrics {
        CheckpointMetrics {
            checkpoint_index: i,
            ter,
            ser: 2.0 * ter,
            mdp: 1.0,
            avg_ppl: 6.0 + i as f64,
        }
    }

    #[test]
    fn summary_means() {
        let one = metrics(1, 0.5);
        let s = summarize(&[one]).unwrap();
        assert_eq!((s.ter, s.ser, s.mdp, s.avg_ppl), (0.5, 1.0, 1.0, 7.0));
        let s = summarize(&[metrics(1, 0.2), metrics(2, 0.4)]).unwrap();
        assert!((s.ter - 0.3).abs() < 1e-12);
        assert!(matches!(summarize(&[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn summary_csv_has_table_layout() {
        let s = summarize(&[metrics(1, 0.25)]).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&[("baseline".into(), s)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "technique,ppl,ter,ser\nbaseline,7,0.25,0.5\n");
    }

    #[test]
    fn series_csv_round_trip() {
        let series = vec![metrics(1, 0.1), metrics(2, 0.3)];
        let mut buf = Vec::new();
        write_series_csv(&series, &mut buf).unwrap();
        assert!(buf.starts_with(b"checkpoint,ter,ser,mdp,avg_ppl\n"));
        assert_eq!(read_series_csv(buf.as_slice()).unwrap(), series);
    }

    proptest! {
        #[test]
        fn mdp_shift_linearity(
            pairs in prop::collection::vec((0.5f64..50.0, 0.5f64..50.0), 1..20),
            shift in -10.0f64..10.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let shifted: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let lhs = compute_mdp(&shifted, &b).unwrap();
            let rhs = compute_mdp(&a, &b).unwrap() + shift;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn rates_monotone_and_ser_dominates_ter(total in 1usize..40, seen_n in 1usize..40, leaked in 0usize..40) {
            let seen_n = seen_n.min(total);
            let leaked = leaked.min(seen_n);
            let all: Vec<EmailAddress> = (0..total).map(|i| email(&format!("p{}.q@r.com", to_letters(i)))).collect();
            let og: OriginalEmailSet = all.iter().cloned().collect();
            let seen = SeenSet(all[..seen_n].iter().cloned().collect());
            let mut prev = (-1.0, -1.0);
            for k in 0..=leaked {
                let leak: LeakSet = all[..k].iter().cloned().collect();
                let ter = compute_ter(&leak, &og).unwrap();
                let ser = compute_ser(&leak, &seen).unwrap();
                prop_assert!(ser >= ter);
                prop_assert!(ter >= prev.0 && ser >= prev.1);
                prop_assert!((0.0..=100.0).contains(&ter) && (0.0..=100.0).contains(&ser));
                prev = (ter, ser);
            }
        }
    }
}
