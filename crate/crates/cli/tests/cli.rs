use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutoff-lab"))
        .args(args)
        .env_remove("CUTOFFLAB_ORACLE_CAP")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

fn write_tree(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn two_edge_segment_hitting_row() {
    let out = run(&["hit", "--children", "1,1", "--pair", "2,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("kind,lx,ly,lq,E,Var,Var_over_E2\n"));
    let r = &rows(&text)[0];
    assert_eq!(r[4].parse::<f64>().unwrap(), 8.0);
}

#[test]
fn tree_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let tree = write_tree(dir.path(), "t.json", r#"{"children":[2,2]}"#);
    let out = run(&["spectrum", "--tree", &tree]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("value,multiplicity,source\n"));
    let total: u64 = rows(&text)
        .iter()
        .map(|r| r[1].parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 7);
}

#[test]
fn malformed_tree_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    for body in [r#"{"children":[2,0]}"#, "not json", r#"{"kids":[1]}"#] {
        let tree = write_tree(dir.path(), "bad.json", body);
        let out = run(&["describe", "--tree", &tree]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert_eq!(stderr(&out).lines().count(), 1, "{}", stderr(&out));
        assert!(out.stdout.is_empty());
    }
    let out = run(&["describe", "--tree", "/nonexistent/tree.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["mix", "--epsilon", "1.5"][..],
        &["mix", "--children", "2", "--epsilon", "0"],
        &["hit", "--children", "2"],
        &["verify"],
        &["bogus"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(
            stderr(&out).lines().count(),
            1,
            "{args:?}: {}",
            stderr(&out)
        );
    }
    let out = run(&["hit", "--children", "1,1", "--pair", "1,1,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("invalid vertex pair"));
}

#[test]
fn verify_small_corpus_passes() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("report.csv");
    let json_path = dir.path().join("report.json");
    let out = run(&[
        "verify",
        "--corpus",
        "4,2",
        "--out",
        csv_path.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let records = rows(&text);
    assert_eq!(records.len(), 2 + 4 + 8 + 16);
    assert!(records.iter().all(|r| &r[8] == "true"));
    let reports: Vec<cutoff_lab::verify::VerifyReport> =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(reports.len(), records.len());
    assert_eq!(
        text.lines().next().unwrap().split(',').collect::<Vec<_>>(),
        cutoff_lab_cli::verify_header()
    );
}

#[test]
fn verify_family_and_single_tree() {
    let out = run(&[
        "verify",
        "--family",
        r#"{"family":"segment","h_range":[1,6]}"#,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(rows(&stdout(&out)).len(), 6);
    let out = run(&["verify", "--children", "1"]);
    let r = &rows(&stdout(&out))[0];
    assert_eq!((&r[3], &r[4], &r[5]), ("1", "1", "1"));
}

#[test]
fn oracle_cap_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_cutoff-lab"))
        .args(["spectrum", "--dense", "--children", "2,2"])
        .env("CUTOFFLAB_ORACLE_CAP", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("oracle cap"));

    // the flag wins over the environment
    let out = Command::new(env!("CARGO_BIN_EXE_cutoff-lab"))
        .args([
            "spectrum",
            "--dense",
            "--children",
            "2,2",
            "--oracle-cap",
            "10",
        ])
        .env("CUTOFFLAB_ORACLE_CAP", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    // above the cap the dense check is skipped, not failed
    let out = run(&["verify", "--children", "2,2", "--oracle-cap", "3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let path = dir.path().join(format!("sim{i}.csv"));
        let out = run(&[
            "simulate",
            "--children",
            "2,2",
            "--pair",
            "2,0,0",
            "--samples",
            "2000",
            "--seed",
            "5",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);

    let a = run(&["verify", "--corpus", "3,2", "--threads", "1"]);
    let b = run(&["verify", "--corpus", "3,2"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn mix_profile_rows() {
    let out = run(&["mix", "--children", "1", "--profile", "--horizon", "3"]);
    let text = stdout(&out);
    assert!(text.starts_with("t,d,argmax_level\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 4);
    assert_eq!(&r[0][1], "0.5");
    assert_eq!(&r[1][1], "0");
}

#[test]
fn simulate_rs_reports_split() {
    let out = run(&[
        "simulate",
        "--children",
        "1",
        "--pair",
        "0,1,0",
        "--samples",
        "200",
        "--rs",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = &rows(&stdout(&out))[0];
    assert_eq!(&r[3], "0");
    assert_eq!(&r[9], "true");
}

#[test]
fn sweep_tables() {
    let out = run(&[
        "sweep",
        "--family",
        r#"{"family":"binary","h_range":[5,4]}"#,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 1);

    let out = run(&[
        "sweep",
        "--family",
        r#"{"family":"custom","h_range":[1,4],"children":[3,1]}"#,
        "--grid",
        "0.1,0.25,0.9",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(
        text.lines().next().unwrap().split(',').collect::<Vec<_>>(),
        cutoff_lab_cli::sweep_header(&[0.1, 0.25, 0.9])
    );
    let r = rows(&text);
    assert_eq!(r.len(), 4);
    assert_eq!(&r[3][1], "3-1-3-1");

    let out = run(&["sweep", "--family", r#"{"family":"tree"}"#]);
    assert_eq!(out.status.code(), Some(2));
}
