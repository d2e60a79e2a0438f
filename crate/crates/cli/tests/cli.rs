use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn arena(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arena")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn validate_dataset_reports_line() {
    let ok = arena(&["validate-dataset", &fixture("tiny.json")]);
    assert!(ok.status.success(), "{}", text(&ok));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\n  \"name\": \"bad\",\n  \"parameters\": [{\"name\": \"a\", \"options\": [\"x\"]}],\n  \"objectives\": [{\"name\": \"y\", \"goal\": \"maximize\"}],\n  \"rows\": []\n}\n",
    )
    .unwrap();
    let out = arena(&["validate-dataset", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out).contains("line 3"), "{}", text(&out));
}

#[test]
fn complexity_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = arena(&[
        "complexity",
        &fixture("tiny.json"),
        &fixture("coupling_8x10x12.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(out).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("dataset,aop,np,pss,skew,si,pib,norm_aop"));
    let coupling = lines.find(|l| l.starts_with("coupling")).unwrap();
    let cells: Vec<&str> = coupling.split(',').collect();
    assert_eq!(&cells[1..4], &["10", "3", "960"]);
}

fn run_into(dir: &Path, method: &str, extra: &[&str]) {
    let dataset = fixture("tiny.json");
    let mut args = vec![
        "run", "--dataset", &dataset,
        "--method", method, "--budget", "6", "--repeats", "3", "--seed", "5",
        "--out", dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = arena(&args);
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    run_into(&runs, "random", &[]);
    run_into(&runs, "bo", &["--acquisition", "ucb"]);
    let files: Vec<PathBuf> = std::fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 6);

    let runs_arg = runs.to_str().unwrap();
    for (kind, header) in [
        ("entropy", "run_id,method,dataset,cumulative_entropy"),
        ("duplicates", "run_id,method,dataset,status,suggestions,duplicates,invalid_rate"),
        ("stats", "method_a,method_b,p_value,delta,label"),
    ] {
        let out = dir.path().join(format!("{kind}.csv"));
        let o = arena(&["analyze", kind, "--runs", runs_arg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{kind}: {}", text(&o));
        let csv = std::fs::read_to_string(out).unwrap();
        assert!(csv.starts_with(header), "{kind}: {csv}");
    }

    let out = dir.path().join("conv.csv");
    let o = arena(&[
        "analyze", "convergence", "--runs", runs_arg, "--dataset", &fixture("tiny.json"),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(out).unwrap();
    // B equals the space size, so every run reaches the optimum
    assert_eq!(csv.lines().skip(1).filter(|l| !l.ends_with(',')).count(), 6, "{csv}");
}

#[test]
fn mock_run_needs_script() {
    let dir = tempfile::tempdir().unwrap();
    let o = arena(&[
        "run", "--dataset", &fixture("tiny.json"), "--method", "mock", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(text(&o).contains("--script"));
}
