use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_recall-tree"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report_value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

fn synth(dir: &Path, name: &str, args: &[&str]) -> String {
    let out = dir.join(name).to_str().unwrap().to_owned();
    let mut full = vec!["synth", "--out", &out];
    full.extend_from_slice(args);
    let o = run(&full);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

/// Generates `train + test` examples with one seed and splits them, so both
/// halves share the same class geometry.
fn synth_split(dir: &Path, args: &[&str], train: usize, test: usize) -> (String, String) {
    let n = (train + test).to_string();
    let all = synth(dir, "all.txt", &[args, &["--examples", &n]].concat());
    let text = fs::read_to_string(all).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), train + test);
    let write = |name: &str, part: &[&str]| {
        let p = dir.join(name);
        fs::write(&p, part.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
        p.to_str().unwrap().to_owned()
    };
    (write("train.txt", &lines[..train]), write("test.txt", &lines[train..]))
}

fn voronoi(dir: &Path) -> (String, String) {
    let args = ["--structure", "voronoi", "--classes", "16", "--dimensions", "6", "--spread", "0.5", "--seed", "1"];
    synth_split(dir, &args, 3000, 500)
}

#[test]
fn train_with_defaults_writes_model_and_report() {
    let dir = TempDir::new().unwrap();
    let (train, test) = voronoi(dir.path());
    let model = dir.path().join("m.bin");
    let o = run(&["train", "--data", &train, "--test", &test, "--model", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(model.exists());
    let report = stdout(&o);
    assert_eq!(report_value(&report, "examples_seen"), 3000.0);
    let acc = report_value(&report, "holdout_accuracy");
    assert!((0.0..=1.0).contains(&acc));
    assert!(report_value(&report, "ledger_error") <= report_value(&report, "ledger_w_nats") + 1e-6);
}

#[test]
fn predict_is_one_line_per_example_and_independent_of_jobs() {
    let dir = TempDir::new().unwrap();
    let (train, test) = voronoi(dir.path());
    let model = dir.path().join("m.bin");
    let m = model.to_str().unwrap();
    for algo in ["recall-tree", "oaa"] {
        assert!(run(&["train", "--algo", algo, "--data", &train, "--model", m, "--constant-feature"]).status.success());
        let one = run(&["predict", "--model", m, "--data", &test, "--jobs", "1", "--constant-feature"]);
        let four = run(&["predict", "--model", m, "--data", &test, "--jobs", "4", "--constant-feature"]);
        assert!(one.status.success());
        assert_eq!(one.stdout, four.stdout);
        let lines: Vec<u32> = stdout(&one).lines().map(|l| l.parse().unwrap()).collect();
        assert_eq!(lines.len(), 500);
        assert!(lines.iter().all(|&c| c < 16));
    }
}

#[test]
fn predict_writes_names_and_files() {
    let dir = TempDir::new().unwrap();
    let (train, test) = voronoi(dir.path());
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    let names = dir.path().join("names.txt");
    fs::write(&names, (0..16).map(|i| format!("class-{i}\n")).collect::<String>()).unwrap();
    let out = dir.path().join("pred.txt");
    assert!(run(&["train", "--data", &train, "--model", &model]).status.success());
    let o = run(&[
        "predict", "--model", &model, "--data", &test,
        "--label-names", names.to_str().unwrap(),
        "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 500);
    assert!(text.lines().all(|l| l.starts_with("class-")));
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let (train, _) = voronoi(dir.path());
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    assert!(run(&["train", "--data", &train, "--model", &model]).status.success());
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = run(&["predict", "--model", &model, "--data", empty.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = TempDir::new().unwrap();
    let (train, test) = voronoi(dir.path());
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();

    // usage
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--data", &train, "--model", &model, "--bits", "3"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--data", &train, "--model", &model, "--passes", "0"]).status.code(), Some(2));
    assert_eq!(
        run(&["synth", "--structure", "voronoi", "--classes", "0", "--dimensions", "2", "--examples", "5", "--out", &model])
            .status
            .code(),
        Some(2)
    );
    // I/O
    let missing = run(&["train", "--data", "no/such/file.txt", "--model", &model]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no/such/file.txt"));
    // format
    let corrupt = dir.path().join("corrupt.bin");
    fs::write(&corrupt, b"not a model").unwrap();
    let o = run(&["predict", "--model", corrupt.to_str().unwrap(), "--data", &test]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!o.stderr.is_empty());
    assert!(run(&["train", "--data", &train, "--model", &model]).status.success());
    let mut bytes = fs::read(&model).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&corrupt, bytes).unwrap();
    assert_eq!(run(&["eval", "--model", corrupt.to_str().unwrap(), "--data", &test]).status.code(), Some(4));
    // data
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1 2:0.5\nx 3:1\n").unwrap();
    let o = run(&["train", "--data", bad.to_str().unwrap(), "--model", &model]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let wide = dir.path().join("wide.txt");
    fs::write(&wide, "1 500:1\n").unwrap();
    assert_eq!(run(&["predict", "--model", &model, "--data", wide.to_str().unwrap()]).status.code(), Some(5));
}

#[test]
fn untrained_model_inspects_as_a_single_node_and_refuses_to_predict() {
    let dir = TempDir::new().unwrap();
    let (_, test) = voronoi(dir.path());
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    let o = run(&[
        "train", "--data", empty.to_str().unwrap(), "--model", &model,
        "--classes", "16", "--features", "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["inspect", "--model", &model]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("nodes=1 "));
    assert_eq!(text.lines().filter(|l| l.starts_with("node=")).count(), 1);
    assert_eq!(run(&["predict", "--model", &model, "--data", &test]).status.code(), Some(6));
    // the class count cannot be inferred from nothing
    let o = run(&["train", "--data", empty.to_str().unwrap(), "--model", &model]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inspect_reports_root_mass_and_ledger() {
    let dir = TempDir::new().unwrap();
    let (train, test) = voronoi(dir.path());
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    assert!(run(&["train", "--data", &train, "--model", &model]).status.success());
    let o = run(&["inspect", "--model", &model, "--data", &test, "--max-depth", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let root = text.lines().find(|l| l.starts_with("node=0 ")).unwrap();
    assert!(root.contains(" m=3000 "), "{root}");
    assert!(text.lines().filter(|l| l.starts_with("node=") && l.contains(" depth=")).all(|l| {
        l.contains("depth=0") || l.contains("depth=1") || l.contains("depth=2")
    }));
    assert!(text.contains("ledger mass=500 "));
    assert!(text.contains("error_le_weighted_entropy=true"));
}

#[test]
fn eval_prints_a_tsv_row() {
    let dir = TempDir::new().unwrap();
    let (train, test) = voronoi(dir.path());
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    assert!(run(&["train", "--algo", "oaa", "--data", &train, "--model", &model]).status.success());
    let o = run(&["eval", "--model", &model, "--data", &test, "--tsv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("algo\t"));
    assert!(lines[1].starts_with("oaa\t3000\tna\t"));
    // OAA scores every class
    let header: Vec<&str> = lines[0].split('\t').collect();
    let row: Vec<&str> = lines[1].split('\t').collect();
    let i = header.iter().position(|h| *h == "scored_classes_mean").unwrap();
    assert_eq!(row[i].parse::<f64>().unwrap(), 16.0);
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["--structure", "zipf-tail", "--classes", "50", "--dimensions", "4", "--examples", "300", "--seed", "9"];
    let a = synth(dir.path(), "a.txt", &args);
    let b = synth(dir.path(), "b.txt", &args);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn same_flags_give_identical_model_files() {
    let dir = TempDir::new().unwrap();
    let (train, _) = voronoi(dir.path());
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for m in [&a, &b] {
        let o = run(&[
            "train", "--data", &train, "--model", m.to_str().unwrap(),
            "--permute", "--seed", "4", "--passes", "2", "--bits", "16",
        ]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn more_candidates_lower_error_on_hierarchical_clusters() {
    let dir = TempDir::new().unwrap();
    let args = ["--structure", "hierarchical-clusters", "--classes", "64", "--dimensions", "8", "--spread", "0.5", "--seed", "1"];
    let (train, test) = synth_split(dir.path(), &args, 30000, 3000);
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    let accuracy = |f: &str| {
        let o = run(&[
            "train", "--data", &train, "--test", &test, "--model", &model,
            "--candidates", f, "--adagrad", "--constant-feature", "--bits", "20",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        report_value(&stdout(&o), "holdout_accuracy")
    };
    let (two, sixteen) = (accuracy("2"), accuracy("16"));
    assert!(sixteen > two, "F=2 {two} vs F=16 {sixteen}");
}

#[test]
fn zero_bernstein_multiplier_descends_at_least_as_deep() {
    let dir = TempDir::new().unwrap();
    let args = ["--structure", "zipf-tail", "--classes", "200", "--dimensions", "10", "--spread", "0.5", "--seed", "1"];
    let (train, test) = synth_split(dir.path(), &args, 4000, 1000);
    let model = dir.path().join("m.bin").to_str().unwrap().to_owned();
    let evals = |mult: &str| {
        let o = run(&[
            "train", "--data", &train, "--test", &test, "--model", &model,
            "--bernstein-multiplier", mult, "--bits", "18",
        ]);
        assert!(o.status.success());
        report_value(&stdout(&o), "router_evals_mean")
    };
    let (zero, one) = (evals("0"), evals("1"));
    assert!(zero >= one, "multiplier 0: {zero} router evaluations, 1: {one}");
}
