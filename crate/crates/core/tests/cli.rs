use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn polyframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyframe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    fixture_dir().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the fixture directory so tests can edit files.
fn scratch_fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rank_writes_valid_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("preds.tsv");
    let o = polyframe(&["rank", "--config", &fixture("improved.toml"), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# polyframe predictions variant=improved config="));
    assert!(lines.next().unwrap().starts_with("# generated_at_unix="));
    assert_eq!(
        lines.next().unwrap(),
        "instance_id\tsentence_type\tconfidence\tranked_candidates\tborda_scores"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 75);
    for row in rows {
        let f: Vec<&str> = row.split('\t').collect();
        assert_eq!(f.len(), 5);
        assert!(f[1] == "literal" || f[1] == "idiomatic");
        assert_eq!(f[3].split(',').count(), 5);
        assert_eq!(f[4].split(',').count(), 5);
    }
    // coverage table goes to stderr
    assert!(stderr(&o).contains("TOTAL\t75\t0"));
}

#[test]
fn evaluate_prints_report_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("preds.tsv");
    let o = polyframe(&[
        "rank",
        "--config",
        &fixture("improved.toml"),
        "--out",
        s(&out),
        "--no-timestamp",
    ]);
    assert!(o.status.success());
    let o = polyframe(&["evaluate", "--pred", s(&out), "--gold", &fixture("dataset.tsv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("# polyframe eval variant=improved config="));
    assert!(lines[0].ends_with("gains=4,3,2,1,0/exponential"));
    assert_eq!(
        lines[1],
        "language\tprocessed\tfailed\ttop1\tndcg5\tsentence_type_accuracy"
    );
    assert_eq!(lines.len(), 2 + 15 + 1);
    assert!(lines.last().unwrap().starts_with("MACRO\t75\t0\t"));
}

#[test]
fn missing_embedding_file_exits_one_naming_path() {
    let dir = scratch_fixture();
    fs::remove_file(dir.path().join("m3.pfemb")).unwrap();
    let o = polyframe(&["rank", "--config", s(&dir.path().join("improved.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("m3.pfemb"), "{}", stderr(&o));
}

#[test]
fn validate_reports_clean_stores() {
    for variant in ["improved", "text_only", "baseline"] {
        let o = polyframe(&["validate-embeddings", "--config", &fixture(&format!("{variant}.toml"))]);
        assert!(o.status.success());
        let first = stdout(&o).lines().next().unwrap().to_string();
        assert!(first.ends_with(" requested, 0 missing"), "{variant}: {first}");
    }
}

#[test]
fn validate_names_removed_caption() {
    let dir = scratch_fixture();
    let path = dir.path().join("vl_text.pfemb");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let before = lines.len();
    lines.retain(|l| !l.starts_with("cap:pt_2:3\t"));
    assert_eq!(lines.len(), before - 1);
    let (d, n) = {
        let h: Vec<&str> = lines[0].split(' ').collect();
        (h[2].to_string(), h[3].parse::<usize>().unwrap())
    };
    lines[0] = Box::leak(format!("PFEMB 1 {d} {}", n - 1).into_boxed_str());
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let o = polyframe(&["validate-embeddings", "--config", s(&dir.path().join("improved.toml"))]);
    assert!(o.status.success());
    let report = stdout(&o);
    assert!(
        report.lines().next().unwrap().ends_with(" requested, 1 missing"),
        "{report}"
    );
    let missing = report.lines().nth(1).unwrap();
    assert!(missing.contains("pt_2"), "{missing}");
    assert!(missing.contains("caption slot 3"), "{missing}");
}

#[test]
fn validate_empty_dataset() {
    let dir = scratch_fixture();
    let header = fs::read_to_string(dir.path().join("dataset.tsv")).unwrap();
    let header = header.lines().next().unwrap().to_string();
    fs::write(dir.path().join("dataset.tsv"), header + "\n").unwrap();
    let o = polyframe(&["validate-embeddings", "--config", s(&dir.path().join("improved.toml"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0 requested, 0 missing\n");
}

#[test]
fn lenient_run_continues_past_missing_embedding() {
    let dir = scratch_fixture();
    let path = dir.path().join("image.pfemb");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines.retain(|l| !l.starts_with("fr_1_img2.png\t"));
    let h: Vec<String> = lines[0].split(' ').map(String::from).collect();
    lines[0] = format!("PFEMB 1 {} {}", h[2], h[3].parse::<usize>().unwrap() - 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let out = dir.path().join("preds.tsv");
    let o = polyframe(&[
        "rank",
        "--config",
        s(&dir.path().join("improved.toml")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("fr\t4\t1"));
    assert!(stderr(&o).contains("fr_1"));
    let rows = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count();
    assert_eq!(rows, 1 + 74);

    let o = polyframe(&[
        "rank",
        "--config",
        s(&dir.path().join("improved.toml")),
        "--set",
        "pipeline.strict=true",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rerun_overwrites_with_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation.tsv");
    let cfg = fixture("improved.toml");
    let o = polyframe(&["ablate", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(&out).unwrap();
    let o = polyframe(&["ablate", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(first, fs::read(&out).unwrap());

    let text = String::from_utf8(first).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    let top1 = |r: &str| r.split('\t').nth(10).unwrap().parse::<f64>().unwrap();
    // rewrite on (rows 0, 2) beats rewrite off (rows 1, 3)
    assert!(top1(rows[0]) > top1(rows[1]));
    assert!(top1(rows[2]) > top1(rows[3]));
}

#[test]
fn train_typer_reproduces_fixture_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lr.json");
    let o = polyframe(&["train-typer", "--config", &fixture("improved.toml"), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("training accuracy 1.0000"));
    let trained: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let checked_in: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture_dir().join("lr_model.json")).unwrap()).unwrap();
    assert_eq!(trained["weights"], checked_in["weights"]);
    assert_eq!(trained["bias"], checked_in["bias"]);
}

#[test]
fn ingest_reports_languages_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("norm.tsv");
    let o = polyframe(&["ingest", "--input", &fixture("dataset.tsv"), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("75 instances, 0 rejected, 15 languages"));
    assert_eq!(stdout(&o).lines().count(), 16);
    assert_eq!(
        fs::read(&out).unwrap(),
        fs::read(fixture_dir().join("dataset.tsv")).unwrap()
    );
}

#[test]
fn usage_and_override_errors() {
    assert_eq!(polyframe(&["frobnicate"]).status.code(), Some(1));
    let o = polyframe(&["rank", "--config", &fixture("improved.toml"), "--set", "pipeline.tua=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pipeline.tua"));
    assert_eq!(polyframe(&["--help"]).status.code(), Some(0));
}
