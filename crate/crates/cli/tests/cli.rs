use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mdqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdqa")).arg("-q").args(args).output().expect("spawn mdqa")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn build_index(corpus: &Path, dir: &Path) -> PathBuf {
    let out = dir.join("idx");
    let o = mdqa(&["index", "--corpus", path_str(corpus), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn write_lines(path: &Path, values: &[Value]) {
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, text).unwrap();
}

fn record(id: &str, answer: &str, source: &str, contexts: &[&str]) -> Value {
    json!({
        "question_id": id,
        "question": "q",
        "context_source": source,
        "subquestions": ["q"],
        "decomposed": false,
        "contexts_used": contexts.iter().map(|c| json!({"id": c, "article_id": c.split('#').next().unwrap(), "score": 0.0})).collect::<Vec<_>>(),
        "prompt_contexts": contexts.len(),
        "examples": [],
        "prompt_hash": "",
        "completion": "",
        "evidence": "",
        "answer": answer,
        "status": "ok"
    })
}

#[test]
fn index_reports_one_passage_per_short_article() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdqa(&["index", "--corpus", path_str(&fixture("tiny_corpus.jsonl")), "--out", path_str(&dir.path().join("idx"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("passages: 3"), "{}", stdout(&o));
    assert!(dir.path().join("idx/index.json").exists());
    assert!(dir.path().join("idx/passages.jsonl").exists());

    let o = mdqa(&["search", "--index", path_str(&dir.path().join("idx")), "--query", "cedar masts", "--k", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!(first.starts_with("1\t") && first.contains("cedar#0"), "{first}");
}

#[test]
fn default_window_is_three_sentences() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_lines(&corpus, &[json!({"id": "a", "title": "A", "contents": "One. Two. Three. Four. Five. Six. Seven."})]);
    let o = mdqa(&["index", "--corpus", path_str(&corpus), "--out", path_str(&dir.path().join("idx"))]);
    assert!(stdout(&o).contains("passages: 3"), "{}", stdout(&o));
    let o = mdqa(&["index", "--corpus", path_str(&corpus), "--window-size", "7", "--out", path_str(&dir.path().join("idx7"))]);
    assert!(stdout(&o).contains("passages: 1"), "{}", stdout(&o));
}

#[test]
fn unreadable_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-corpus.jsonl");
    let o = mdqa(&["index", "--corpus", path_str(&missing), "--out", path_str(&dir.path().join("idx"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-corpus.jsonl"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(mdqa(&["index"]).status.code(), Some(1));
    assert_eq!(mdqa(&["frobnicate"]).status.code(), Some(1));
    let o = mdqa(&["run", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = stdout(&o);
    for flag in ["--context-source", "--mock-providers", "--shots", "--prompt-mode", "--config", "--parallelism"] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn invalid_context_source_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let idx = build_index(&fixture("tiny_corpus.jsonl"), dir.path());
    let questions = dir.path().join("q.jsonl");
    write_lines(&questions, &[json!({"question_id": "a", "question": "What resists rot?", "gold_answers": ["Cedar"], "answer_type": "span"})]);
    let config = dir.path().join("run.toml");
    fs::write(&config, "context_source = \"everything\"\n").unwrap();
    let o = mdqa(&[
        "run", "--questions", path_str(&questions), "--index", path_str(&idx), "--out", path_str(&dir.path().join("out")),
        "--config", path_str(&config), "--mock-providers",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("everything"), "{}", stderr(&o));
    assert!(!dir.path().join("out/records.jsonl").exists());

    fs::write(&config, "shots = 4\nunknown_knob = 1\n").unwrap();
    let o = mdqa(&[
        "run", "--questions", path_str(&questions), "--index", path_str(&idx), "--out", path_str(&dir.path().join("out")),
        "--config", path_str(&config), "--mock-providers",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown_knob"), "{}", stderr(&o));

    let o = mdqa(&[
        "run", "--questions", path_str(&questions), "--index", path_str(&idx), "--out", path_str(&dir.path().join("out")),
        "--context-source", "everything", "--mock-providers",
    ]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn perfect_answers_score_one_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    write_lines(&gold, &[
        json!({"question_id": "a", "question": "q", "gold_answers": ["Edwin Marsh"], "answer_type": "span"}),
        json!({"question_id": "b", "question": "q", "gold_answers": ["1794", "in 1794"], "answer_type": "span"}),
    ]);
    let records = dir.path().join("records.jsonl");
    write_lines(&records, &[record("a", "Edwin Marsh", "gold", &[]), record("b", "in 1794", "gold", &[])]);
    let scores = dir.path().join("scores.jsonl");
    let o = mdqa(&["evaluate", "--records", path_str(&records), "--gold", path_str(&gold), "--profile", "iirc", "--out", path_str(&scores)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("f1") || l.starts_with("em")).collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows.iter().all(|r| r.contains("100.0")), "{table}");
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 3);
}

#[test]
fn strategyqa_gold_records_report_recall_absent() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    write_lines(&gold, &[
        json!({"question_id": "a", "question": "q", "gold_answers": ["yes"], "answer_type": "boolean", "gold_evidence_ids": [["p#0"]], "subquestions": ["x?", "y?"]}),
        json!({"question_id": "b", "question": "q", "gold_answers": ["no"], "answer_type": "boolean", "gold_evidence_ids": [["r#0"]], "subquestions": ["z?"]}),
    ]);
    let records = dir.path().join("records.jsonl");
    write_lines(&records, &[record("a", "yes", "gold", &["p#0"]), record("b", "yes", "gold", &["r#0"])]);
    let o = mdqa(&["evaluate", "--records", path_str(&records), "--gold", path_str(&gold), "--profile", "strategyqa"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let recall = table.lines().find(|l| l.starts_with("recall")).expect("recall row");
    assert!(recall.contains("absent"), "{table}");
    let accuracy = table.lines().find(|l| l.starts_with("accuracy")).expect("accuracy row");
    assert!(accuracy.contains("50.0"), "{table}");
}

#[test]
fn records_without_gold_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    write_lines(&gold, &[json!({"question_id": "a", "question": "q", "gold_answers": ["x"], "answer_type": "span"})]);
    let records = dir.path().join("records.jsonl");
    write_lines(&records, &[record("a", "x", "gold", &[]), record("stray-1", "x", "gold", &[]), record("stray-2", "x", "gold", &[])]);
    let o = mdqa(&["evaluate", "--records", path_str(&records), "--gold", path_str(&gold), "--profile", "iirc"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("stray-1") && err.contains("stray-2"), "{err}");
}

#[test]
fn run_writes_records_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let idx = build_index(&fixture("e2e/corpus.jsonl"), dir.path());
    let out = dir.path().join("out");
    let o = mdqa(&[
        "run", "--questions", path_str(&fixture("e2e/questions.jsonl")), "--index", path_str(&idx),
        "--examples", path_str(&fixture("e2e/examples.jsonl")), "--out", path_str(&out), "--mock-providers",
        "--context-source", "linked_intersection", "--shots", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 10);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["context_source"], "linked_intersection");
    assert_eq!(manifest["config"]["shots"], 2);
    assert_eq!(manifest["instances"], 10);
    assert_eq!(fs::read_to_string(out.join("timings.jsonl")).unwrap().lines().count(), 10);

    let o = mdqa(&["answer", "--index", path_str(&idx), "--question", "Who built the lighthouse?", "--mock-providers", "--shots", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(record["status"], "ok");
}
