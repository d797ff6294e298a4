use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rmft_core::corpus::save_corpus;
use rmft_core::synthetic::{duplication_corpus, SyntheticSpec};
use serde_json::Value;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn rmft(dir: &Path, args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_rmft"))
        .args(args)
        .env("RMFT_OUT_DIR", dir.join("run"))
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Out {
    let o = rmft(dir, args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o
}

fn small_fixture(dir: &Path) -> PathBuf {
    let spec = SyntheticSpec {
        datapoints: 240,
        people: 60,
        top_email_occurrences: 200,
        ..Default::default()
    };
    let path = dir.join("fixture.jsonl");
    save_corpus(&duplication_corpus(&spec), &path).unwrap();
    let conf = dir.join("run.conf");
    fs::write(
        &conf,
        format!(
            "corpus = {}\nseed = 5\nepochs = 2\ncheckpoints_per_epoch = 2\nmax_new_bytes = 40\n",
            path.display()
        ),
    )
    .unwrap();
    conf
}

const STAGES: &[&str] = &["eda", "mask", "dedup", "simulate", "eval", "maxter", "report"];

fn run_all(dir: &Path, conf: &Path, extra: &[&str]) {
    for stage in STAGES {
        let mut args = vec![*stage, "--config", conf.to_str().unwrap()];
        args.extend_from_slice(extra);
        ok(dir, &args);
    }
}

#[test]
fn full_pipeline_emits_every_table() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_fixture(tmp.path());
    run_all(tmp.path(), &conf, &[]);
    let run = tmp.path().join("run");

    let freq = fs::read_to_string(run.join("eda/frequency.csv")).unwrap();
    assert_eq!(freq.lines().next(), Some("rank,email,count"));
    assert_eq!(freq.lines().count(), 11);
    assert!(freq.contains(",kay.mann@enron.com,200\n"));

    let mask: Value = serde_json::from_str(&fs::read_to_string(run.join("rmft/summary.json")).unwrap()).unwrap();
    assert_eq!(mask["rows_before"], mask["rows_after"]);
    assert_eq!(mask["max_count_after"], 1);

    let arts = fs::read_to_string(run.join("simulate/rmft.artifacts.jsonl")).unwrap();
    assert_eq!(arts.lines().count(), 4);

    let summary = fs::read_to_string(run.join("eval/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "technique,ppl,ter,ser");
    assert!(rows[1].starts_with("baseline,"));
    assert_eq!(rows.len(), 4);

    let curve = fs::read_to_string(run.join("maxter/rmft.curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 202);
    let aurc = fs::read_to_string(run.join("maxter/aurc.csv")).unwrap();
    assert!(aurc.lines().nth(1).unwrap().ends_with(",-"));

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(run.join("report/manifest.json")).unwrap()).unwrap();
    let stages = manifest["stages"].as_array().unwrap();
    let ingest = stages.iter().find(|s| s["stage"] == "ingest").unwrap();
    assert_eq!(ingest["status"], "missing");
    for s in stages.iter().filter(|s| s["stage"] != "ingest") {
        assert_eq!(s["status"], "present", "{s}");
        for f in s["files"].as_array().unwrap() {
            let path = f["path"].as_str().unwrap();
            assert!(run.join(path).is_file(), "{path}");
            if f["bundled"].as_bool().unwrap() {
                assert!(run.join("report").join(path).is_file(), "{path}");
            }
        }
    }
}

#[test]
fn missing_stages_are_listed_as_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_fixture(tmp.path());
    ok(tmp.path(), &["eda", "--config", conf.to_str().unwrap()]);
    ok(tmp.path(), &["report"]);
    let text = fs::read_to_string(tmp.path().join("run/report/manifest.json")).unwrap();
    let manifest: Value = serde_json::from_str(&text).unwrap();
    let status = |name: &str| {
        manifest["stages"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["stage"] == name)
            .unwrap()["status"]
            .clone()
    };
    assert_eq!(status("eda"), "present");
    for gap in ["mask", "dedup", "simulate", "eval", "maxter"] {
        assert_eq!(status(gap), "missing");
    }
}

#[test]
fn outputs_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_fixture(tmp.path());
    let c = conf.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        for stage in ["eda", "mask", "simulate"] {
            ok(tmp.path(), &[stage, "--config", c, "--out", out.to_str().unwrap(), "--jobs", jobs, "--set", "techniques=baseline,rmft"]);
        }
    }
    for f in ["rmft/train.jsonl", "simulate/baseline.artifacts.jsonl", "simulate/rmft.artifacts.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_fixture(tmp.path());
    ok(tmp.path(), &["eda", "--config", conf.to_str().unwrap(), "--seed", "77", "--set", "split=100,10,5"]);
    let recorded = fs::read_to_string(tmp.path().join("run/config/eda.conf")).unwrap();
    assert!(recorded.contains("seed = 77\n"));
    assert!(recorded.contains("split = 100,10,5\n"));
    let splits: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/eda/splits.json")).unwrap()).unwrap();
    assert_eq!(splits["test"], 5);
}

#[test]
fn ingest_reads_a_directory_of_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("maildir/kay-m/sent");
    fs::create_dir_all(&raw).unwrap();
    fs::write(raw.join("1."), "From: kay.mann@enron.com\r\nTo: sara.shackleton@enron.com\r\n\r\nHi Sara\r\n").unwrap();
    fs::write(raw.join("2."), "From: sara.shackleton@enron.com\n\nThanks\n").unwrap();
    let out1 = tmp.path().join("c1.jsonl");
    let out2 = tmp.path().join("c2.jsonl");
    let root = tmp.path().join("maildir");
    let o = ok(tmp.path(), &["ingest", root.to_str().unwrap(), "--output", out1.to_str().unwrap()]);
    assert!(o.stdout.contains("ingested 2 messages"));
    ok(tmp.path(), &["ingest", root.to_str().unwrap(), "--output", out2.to_str().unwrap()]);
    let text = fs::read_to_string(&out1).unwrap();
    assert_eq!(text, fs::read_to_string(&out2).unwrap());
    assert!(!text.contains("\\r"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn empty_ingest_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("empty");
    fs::create_dir(&raw).unwrap();
    let o = ok(tmp.path(), &["ingest", raw.to_str().unwrap()]);
    assert!(o.stderr.contains("warning"));
    assert_eq!(fs::read_to_string(tmp.path().join("run/corpus.jsonl")).unwrap(), "");
}

#[test]
fn all_unique_corpus_is_left_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let texts = (0..111).map(|i| format!("From: person.x@host{i}.com\n\nbody {i}\n"));
    let corpus = rmft_core::corpus::Corpus::from_texts("u", texts);
    let path = tmp.path().join("u.jsonl");
    save_corpus(&corpus, &path).unwrap();
    let p = path.to_str().unwrap();
    for stage in ["eda", "mask", "dedup"] {
        ok(tmp.path(), &[stage, "--corpus", p]);
    }
    let run = tmp.path().join("run");
    let train = fs::read(run.join("splits/train.jsonl")).unwrap();
    assert_eq!(fs::read(run.join("dedup/train.jsonl")).unwrap(), train);
    assert_eq!(fs::read(run.join("rmft/train.jsonl")).unwrap(), train);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(rmft(tmp.path(), &["frobnicate"]).code, 1);
    assert_eq!(rmft(tmp.path(), &["eda", "--set", "colour=red"]).code, 1);
    assert_eq!(rmft(tmp.path(), &["eda", "--set", "order=1"]).code, 1);
    assert_eq!(rmft(tmp.path(), &["eda", "--jobs", "0"]).code, 1);
    assert_eq!(rmft(tmp.path(), &["--help"]).code, 0);
    // no corpus yet
    assert_eq!(rmft(tmp.path(), &["eda"]).code, 2);
    assert_eq!(rmft(tmp.path(), &["ingest", "/definitely/not/here"]).code, 2);
    fs::create_dir_all(tmp.path().join("run")).unwrap();
    fs::write(tmp.path().join("run/corpus.jsonl"), "{\"id\":0,\"text\":\"a\"}\nnot json\n").unwrap();
    let o = rmft(tmp.path(), &["eda"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 2"), "{}", o.stderr);
}
