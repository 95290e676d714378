use std::path::Path;
use std::process::{Command, Output};

use cbr_core::bundled::{student_fixture, STUDENT_FIXTURE_CSV, STUDENT_SCHEMA_JSON};

const SCENARIO: &str = "gpa=3.2,gradeDigitalSystems=A,gradeBasicProgramming=A,skillAssembly=true,\
skillProgramming=true,skillInstrumentDesign=false,quiz1=45,midExam=40";

fn cbr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbr")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn schema_commands() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "s.schema.json", STUDENT_SCHEMA_JSON);
    let out = cbr(&["schema", "validate", &good]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("`student` with 11 attributes"));

    let bad = write(
        dir.path(),
        "bad.json",
        &STUDENT_SCHEMA_JSON.replacen("\"weight\": 1.0", "\"weight\": 1.5", 1),
    );
    let out = cbr(&["schema", "validate", &bad]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("weight"), "{}", stderr(&out));

    let out = cbr(&["schema", "show", "--builtin", "student"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 13);
    let out = cbr(&["schema", "show", "--builtin", "student", "--json"]);
    assert_eq!(
        cbr_core::define_schema(&stdout(&out)).unwrap(),
        cbr_core::student_schema()
    );
}

#[test]
fn import_then_retrieve() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "course.csv", STUDENT_FIXTURE_CSV);
    let json = dir.path().join("course.json");
    let out = cbr(&["casebase", "import", &csv, "-o", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read(&json).unwrap(), student_fixture().to_json());

    let out = cbr(&["retrieve", json.to_str().unwrap(), "--query", SCENARIO]);
    assert_eq!(code(&out), 0);
    let ids: Vec<String> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().to_string())
        .collect();
    assert_eq!(ids, ["S16", "S01", "S04", "S12", "S08"]);

    let out = cbr(&["retrieve", &csv, "-q", r#"{"gpa": 3.0}"#, "-k", "2", "--json"]);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.len(), 2);

    let out = cbr(&["casebase", "list", &csv]);
    assert_eq!(stdout(&out).lines().count(), 30);
}

#[test]
fn predict_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "course.csv", STUDENT_FIXTURE_CSV);
    let out = cbr(&["predict", &csv, "-q", SCENARIO]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(
        text.starts_with("Likely final grade: B (4 of 5 similar cases, 80%)."),
        "{text}"
    );
    assert!(text.contains("quiz2"));

    let out = cbr(&["predict", &csv, "-q", SCENARIO, "--json"]);
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["distribution"]["suggestion"], "B");

    let out = cbr(&["evaluate", &csv, "-k", "3"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["total"], 28);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let header = STUDENT_FIXTURE_CSV.lines().next().unwrap();
    let empty = write(dir.path(), "empty.csv", &format!("{header}\n"));
    let out = cbr(&["retrieve", &empty, "-q", "gpa=3"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("empty case base"));
    assert!(out.stdout.is_empty());

    let csv = write(dir.path(), "course.csv", STUDENT_FIXTURE_CSV);
    assert_eq!(code(&cbr(&["retrieve", &csv, "-q", "gpa=7"])), 1);
    assert_eq!(code(&cbr(&["retrieve", &csv, "-q", "finalGrade=A"])), 1);
    assert_eq!(code(&cbr(&["retrieve", &csv, "-q", "gpa=3", "-k", "0"])), 1);
    assert_eq!(code(&cbr(&["retrieve", &csv, "-q", "gpa"])), 2);
    assert_eq!(code(&cbr(&["retrieve", &csv])), 2);
    assert_eq!(code(&cbr(&["frobnicate"])), 2);
    assert_eq!(code(&cbr(&["--help"])), 0);
    assert_eq!(code(&cbr(&["retrieve", "/no/such.csv", "-q", "gpa=3"])), 3);

    let broken = write(
        dir.path(),
        "broken.csv",
        &STUDENT_FIXTURE_CSV.replacen(",3.1,", ",x,", 1),
    );
    let out = cbr(&["casebase", "import", &broken]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("row 1"), "{}", stderr(&out));

    let other = dir.path().join("other.json");
    let mut doc: serde_json::Value = serde_json::from_slice(&student_fixture().to_json()).unwrap();
    doc["schemaId"] = "mystery".into();
    std::fs::write(&other, doc.to_string()).unwrap();
    assert_eq!(code(&cbr(&["casebase", "list", other.to_str().unwrap()])), 2);
}

#[test]
fn serve_rejects_missing_data_dir() {
    let out = cbr(&["serve", "--data", "/no/such/dir", "--port", "0"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn shorthand_query_ranks_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("fixtures.json");
    student_fixture().save(&json, cbr_core::Format::Json).unwrap();
    let out = cbr(&[
        "retrieve",
        json.to_str().unwrap(),
        "--query",
        "gpa=3.0,midExam=45",
        "-k",
        "5",
    ]);
    assert_eq!(code(&out), 0);
    let scores: Vec<f64> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 5);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
}
