use fraclab::report::*;
use fraclab::scenario::{run_scenario_text, RunOptions};

const TEXT: &str = r#"{
  "name": "tiny",
  "grid": { "dim": 1, "m": 6 },
  "field": { "kind": "linear", "slope": [1.0] },
  "check": { "theorem": "FRAC2GRAD" }
}"#;

fn bundle() -> ReportBundle {
    run_scenario_text(TEXT, &RunOptions::default()).unwrap()
}

#[test]
fn empty_bundle_is_header_only() {
    let csv = to_csv_string(&ReportBundle::default()).unwrap();
    assert_eq!(csv, format!("{}\n", CSV_HEADER.join(",")));
}

#[test]
fn one_row_per_check() {
    let b = bundle();
    let csv = to_csv_string(&b).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells.len(), 16);
    assert_eq!(cells[0], "FRAC2GRAD");
    assert_eq!(cells[2], "6");
    assert_eq!(cells[14], "true");
    assert_eq!(cells[15], "0");
    assert_eq!(cells[10].parse::<f64>().unwrap(), b.checks[0].lhs);
}

#[test]
fn json_round_trip() {
    let b = bundle();
    let text = to_json_string(&b).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(from_json_str(&text).unwrap(), b);
    assert_eq!(render(&b, Format::Json).unwrap(), text);
}

#[test]
fn hard_failures_count_failed_checks() {
    let mut b = bundle();
    assert_eq!(b.hard_failures(), 0);
    b.checks[0].pass_explicit = Some(false);
    b.checks.push(b.checks[0].clone());
    assert_eq!(b.hard_failures(), 2);
}

#[test]
fn emit_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let b = bundle();
    emit_report(&b, Format::Csv, Some(&path)).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), to_csv_string(&b).unwrap());
}
