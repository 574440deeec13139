use std::path::PathBuf;
use std::process::{Command, Output};

fn table() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data/wam.json")
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitmodel")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn fit_prints_deviance_row() {
    let t = table();
    let text = stdout(&["fit", "--table", &t, "--model", "[ABCE][BCDE][CDEF]"]);
    assert!(text.contains("1190 23.284 32 0.86914 -40.72 [ABEC][BDEC][DEFC]"), "{text}");
}

#[test]
fn fit_json_has_fields() {
    let t = table();
    let text = stdout(&["fit", "--table", &t, "--model", "[ABCE][BCDE][CDEF]", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["count"], 1190);
    assert_eq!(v["fit"]["df"], 32);
    assert!((v["fit"]["deviance"].as_f64().unwrap() - 23.284).abs() < 5e-4);
}

#[test]
fn select_with_fixed_triangle() {
    let t = table();
    let text = stdout(&["select", "--table", &t, "--fix", "ABC"]);
    assert!(text.contains("[ABCE][BCDE][CDEF]"), "{text}");
}

#[test]
fn split_select_default_listing() {
    let t = table();
    let text = stdout(&["split-select", "--table", &t, "--fix", "ABC"]);
    let model = text.split("model\n").nth(1).unwrap();
    assert_eq!(
        model.trim_end(),
        "C=1: [ABE]\nC=2: [AB][BE]\nC=1: [BE][DE]\nC=2: [BDE]\nD=1: [EFC]\nD=2: [EC][FC]\ngraph: [ABEC][BDEC][DEFC]"
    );
}

#[test]
fn split_select_with_collection() {
    let t = table();
    let text = stdout(&["split-select", "--table", &t, "--fix", "ABC", "--collection", "[BCDE]+[ABCE]"]);
    assert!(text.contains("[BDEC]+[ABEC] C 4.142 4 -3.86 C=1:BD C=2:AE adopted"), "{text}");
    let model = text.split("model\n").nth(1).unwrap();
    assert_eq!(model.trim_end(), "C=1: [ABE][DE]\nC=2: [AB][BDE]\nD=1: [EFC]\nD=2: [EC][FC]\ngraph: [ABEC][BDEC][DEFC]");
}

#[test]
fn split_select_excluding_variables() {
    let t = table();
    let text = stdout(&["split-select", "--table", &t, "--fix", "ABC", "--exclude-split", "D,F"]);
    assert!(text.contains("C=1: [DEF]"), "{text}");
    assert!(text.contains("C=2: [DE][DF]"), "{text}");
}

#[test]
fn test_edge_rows() {
    let t = table();
    let text = stdout(&["test-edge", "--table", &t, "--fix", "ABC", "--edge", "BD"]);
    for line in [
        "736 17.983 2 0.00012 13.98 E=1",
        "454 7.525 2 0.02323 3.52 E=2",
        "443 1.851 2 0.39639 -2.15 C=1",
        "747 23.657 2 0.00001 19.66 C=2",
        "1190 25.507 4 0.00004 17.51 Total",
    ] {
        assert!(text.contains(line), "missing {line}\n{text}");
    }
    assert!(text.find("partition by E").unwrap() < text.find("partition by C").unwrap());
}

#[test]
fn summary_total() {
    let t = table();
    let text = stdout(&["summary", "--table", &t, "--fix", "ABC"]);
    assert!(text.contains("1190 23.284 32 0.86914 -40.72 [ABEC][BDEC][DEFC]"), "{text}");
    assert!(text.trim_end().ends_with("1190 29.097 38 0.84987 -46.90 Total"), "{text}");
}

#[test]
fn instantiate_writes_one_file_per_level() {
    let t = table();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("sg2.json");
    let out = dir.path().to_str().unwrap();
    stdout(&["split-select", "--table", &t, "--fix", "ABC", "--collection", "[BCDE]+[ABCE]", "--save", model.to_str().unwrap()]);
    stdout(&["instantiate", "--table", &t, "--model-file", model.to_str().unwrap(), "--all", "C", "--out-dir", out, "--stem", "sg2"]);
    for name in ["sg2.C=1.dot", "sg2.C=2.dot"] {
        let dot = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(dot.contains("graph"), "{dot}");
    }
}

#[test]
fn output_is_deterministic() {
    let t = table();
    let args = ["split-select", "--table", &t, "--fix", "ABC"];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn exit_codes() {
    let t = table();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{bad").unwrap();
    let out = dir.path().to_str().unwrap();
    let malformed = run(&["instantiate", "--table", &t, "--model-file", bad.to_str().unwrap(), "--all", "C", "--out-dir", out]);
    assert_eq!(malformed.status.code(), Some(2));
    let missing = run(&["fit", "--table", "/nonexistent/table.json", "--model", "[AB]"]);
    assert_eq!(missing.status.code(), Some(3));
    let slow = run(&["fit", "--table", &t, "--model", "[AB][BC][AC]", "--max-iter", "1"]);
    assert_eq!(slow.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&slow.stdout).contains("(not converged)"));
    let usage = run(&["fit", "--table", &t]);
    assert_eq!(usage.status.code(), Some(2));
}
