use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn attrib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrib")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy_config() -> PathBuf {
    data().join("toy/config.toml")
}

#[test]
fn run_writes_outputs_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = attrib(&["run", "--config", s(&toy_config()), "--scenario", "rtg-gold", "--mock", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["predictions.jsonl", "metrics.jsonl", "report.json", "summary.csv", "summary.txt", "run_info.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = attrib(&["report", "--dir", s(&out), "--format", "csv"]);
    assert_eq!(code(&csv), 0);
    let text = stdout(&csv);
    assert!(text.starts_with("scenario,metric,value,n\n"));
    assert!(text.contains("rtg-gold,overlap_recall,1,10"), "{text}");
    let table = attrib(&["report", "--dir", s(&out)]);
    assert!(stdout(&table).contains("10 queries: 10 scored"));

    let rescored = dir.path().join("rescored");
    let eval = attrib(&[
        "eval", "answers",
        "--pred", s(&out.join("predictions.jsonl")),
        "--dataset", s(&data().join("toy/dataset.jsonl")),
        "--corpus", s(&data().join("toy/corpus.jsonl")),
        "--mapping", s(&toy_config()),
        "--out", s(&rescored),
        "--mock",
    ]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(rescored.join("report.json").is_file());
}

#[test]
fn scenario_g_has_no_citation_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrib(&["run", "--config", s(&toy_config()), "--scenario", "g", "--mock", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.contains("rouge_l.f"));
    assert!(!csv.contains("autoais") && !csv.contains("overlap"), "{csv}");
}

#[test]
fn bad_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrib(&["run", "--config", s(&toy_config()), "--fusion", "borda", "--mock", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let missing = attrib(&["run", "--config", s(&dir.path().join("nope.toml"))]);
    assert_eq!(code(&missing), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\nk_docs = 2\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&attrib(&["run", "--config", s(&bad)])), 2);
    assert_eq!(code(&attrib(&["report", "--dir", s(dir.path()), "--format", "xml"])), 2);
}

#[test]
fn unreachable_backend_fails_the_run_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("live.toml");
    let toy = data().join("toy");
    std::fs::write(
        &config,
        format!(
            "[dataset]\ncorpus = {:?}\nqueries = {:?}\n\n[scenario]\nscenario = \"rtg_vanilla\"\n\n\
             [gateway]\nmock = false\nllm_base = \"http://127.0.0.1:9\"\nscorer_base = \"http://127.0.0.1:9\"\n\
             attempts = 1\ntimeout_secs = 2\n",
            s(&toy.join("corpus.jsonl")),
            s(&toy.join("dataset.jsonl")),
        ),
    )
    .unwrap();
    let o = attrib(&["run", "--config", s(&config), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/report.json").is_file());
}

#[test]
fn index_build_and_retrieval_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrib(&["index", "build", "--corpus", s(&data().join("toy/corpus.jsonl")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("index.json").is_file());

    let out = dir.path().join("qg");
    let run = attrib(&["run", "--config", s(&toy_config()), "--scenario", "rtg-query-gen", "--k", "2", "--mock", "--out", s(&out)]);
    assert_eq!(code(&run), 0);
    let o = attrib(&[
        "eval", "retrieval",
        "--run", s(&out.join("runs/t000.run")),
        "--run", s(&out.join("runs/t001.run")),
        "--qrels", s(&data().join("toy/qrels.txt")),
        "--cutoffs", "1,10",
        "--format", "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("MAX,nDCG@10,"), "{text}");
}

#[test]
fn sweep_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrib(&["sweep-k", "--config", s(&toy_config()), "--scenario", "rtg-vanilla", "--ks", "1,2", "--mock", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.contains("1,overlap_recall,0.5") && csv.contains("2,overlap_recall,1"), "{csv}");
    assert!(dir.path().join("k2/report.json").is_file());
}

#[test]
fn stats_on_sample_match_committed_numbers() {
    let o = attrib(&[
        "stats",
        "--dataset", s(&data().join("sample/hagrid_sample.jsonl")),
        "--mapping", s(&data().join("sample/hagrid.toml")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let want: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data().join("sample/hagrid_sample.stats.json")).unwrap()).unwrap();
    for key in ["n_queries", "n_answers", "n_informative", "n_attributable", "avg_gold_passages", "avg_citations"] {
        assert_eq!(got[key], want[key], "{key}");
    }
}

#[test]
fn correlate_runs_on_toy_annotations() {
    let o = attrib(&[
        "correlate",
        "--dataset", s(&data().join("toy/dataset.jsonl")),
        "--corpus", s(&data().join("toy/corpus.jsonl")),
        "--mapping", s(&toy_config()),
        "--mock",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("autoais_cit"));
}
