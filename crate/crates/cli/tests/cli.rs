use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graph-ttt"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Triangle plus a single edge, labels 1 and 2.
fn write_fixture(dir: &Path) {
    std::fs::write(dir.join("MINI_A.txt"), "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n").unwrap();
    std::fs::write(dir.join("MINI_graph_indicator.txt"), "1\n1\n1\n2\n2\n").unwrap();
    std::fs::write(dir.join("MINI_graph_labels.txt"), "1\n2\n").unwrap();
}

/// Small and fast: 40 graphs, few epochs.
const QUICK: &[&str] = &[
    "--set",
    "dataset.synth.num_graphs=40",
    "--set",
    "dataset.synth.max_nodes=20",
    "--set",
    "train.epochs=4",
    "--set",
    "model.hidden_dim=8",
    "--set",
    "output_dir=\"out\"",
];

fn with_quick<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(QUICK);
    v
}

#[test]
fn ingest_summarises_and_validate_only_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    let dir = tmp.path().to_str().unwrap();
    let out = tmp.path().join("summary");
    let o = run_in(tmp.path(), &["ingest", "--dir", dir, "--name", "MINI", "--validate-only", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "2 graphs, 2 classes, F=1");
    assert!(!out.exists());

    let o = run_in(tmp.path(), &["ingest", "--dir", dir, "--name", "MINI", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(out.join("MINI.dataset.json").exists());
}

#[test]
fn missing_input_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["ingest", "--dir", ".", "--name", "NOPE"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NOPE_A.txt"));
}

#[test]
fn bad_config_names_field_and_bound() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[train]\nbatch_size = 10\n").unwrap();
    let o = run_in(tmp.path(), &["split", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("train.batch_size") && err.contains("8, 16, 32, 64"), "{err}");

    std::fs::write(tmp.path().join("d.toml"), "[train]\nepoch = 10\n").unwrap();
    let o = run_in(tmp.path(), &["split", "--config", "d.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn split_is_deterministic_and_random_sizes_are_8_1_1() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["split", "--kind", "random", "--seed", "3", "--set", "dataset.synth.num_graphs=10", "--out"];
    let mut a = args.to_vec();
    a.push("a.json");
    let mut b = args.to_vec();
    b.push("b.json");
    assert!(run_in(tmp.path(), &a).status.success());
    assert!(run_in(tmp.path(), &b).status.success());
    let ja = std::fs::read(tmp.path().join("a.json")).unwrap();
    assert_eq!(ja, std::fs::read(tmp.path().join("b.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    let len = |k: &str| v[k].as_array().unwrap().len();
    assert_eq!((len("train"), len("val"), len("test")), (8, 1, 1));
}

#[test]
fn ood_split_tests_on_larger_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_in(tmp.path(), &["synth", "--out", "data", "--name", "SYN"]).status.success());
    let o = run_in(tmp.path(), &["split", "--kind", "ood", "--set", "dataset.dir=\"data\"", "--set", "dataset.name=SYN", "--out", "s.json"]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("s.json")).unwrap()).unwrap();
    let sizes: Vec<usize> = {
        let ind = std::fs::read_to_string(tmp.path().join("data/SYN_graph_indicator.txt")).unwrap();
        let mut counts = vec![0; 120];
        for l in ind.lines() {
            counts[l.trim().parse::<usize>().unwrap() - 1] += 1;
        }
        counts
    };
    let mut sorted = sizes.clone();
    sorted.sort_unstable();
    let median = (sorted[59] + sorted[60]) as f64 / 2.0;
    for t in v["test"].as_array().unwrap() {
        assert!(sizes[t.as_u64().unwrap() as usize] as f64 >= median);
    }
}

#[test]
fn gt3_with_zero_steps_reproduces_joint_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &with_quick(&["train", "--checkpoint", "m.json"]));
    assert!(o.status.success(), "{o:?}");
    let o = run_in(tmp.path(), &with_quick(&["eval", "--mode", "JOINT", "--checkpoint", "m.json"]));
    assert!(o.status.success(), "{o:?}");
    let o = run_in(tmp.path(), &with_quick(&["eval", "--mode", "GT3", "--checkpoint", "m.json", "--set", "ttt.steps=0"]));
    assert!(o.status.success(), "{o:?}");
    let joint = std::fs::read(tmp.path().join("out/predictions-JOINT.csv")).unwrap();
    let gt3 = std::fs::read(tmp.path().join("out/predictions-GT3.csv")).unwrap();
    assert_eq!(joint, gt3);
    let header = String::from_utf8_lossy(&joint).lines().next().unwrap().to_string();
    assert_eq!(header, "id,true_label,predicted_label,scores,ttt_steps_used");

    // a joint model cannot be scored as RAW
    let o = run_in(tmp.path(), &with_quick(&["eval", "--mode", "RAW", "--checkpoint", "m.json"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let files = ["summary.json", "predictions-RAW.csv", "predictions-GT3.csv", "summary-GT3.json", "joint.ckpt.json"];
    let mut first = Vec::new();
    for pass in 0..2 {
        let o = run_in(tmp.path(), &with_quick(&["--jobs", if pass == 0 { "1" } else { "3" }, "run"]));
        assert!(o.status.success(), "{o:?}");
        let contents: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(tmp.path().join("out").join(f)).unwrap()).collect();
        if pass == 0 {
            first = contents;
        } else {
            assert_eq!(first, contents);
        }
    }
    let summary: serde_json::Value = serde_json::from_slice(&first[0]).unwrap();
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["results"].as_array().unwrap().len(), 3);
}

#[test]
fn cka_writes_six_pairs_per_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &with_quick(&["cka"]));
    assert!(o.status.success(), "{o:?}");
    let text = std::fs::read_to_string(tmp.path().join("out/cka.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pair,layer,value"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn verify_exit_status() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["verify", "--theorem", "1", "--out", "t1.json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("t1.json")).unwrap()).unwrap();
    assert_eq!(v["violations"], 0);
    assert_eq!(v["trials"], 9000);

    let o = run_in(tmp.path(), &["verify", "--theorem", "2", "--trials", "50", "--surrogate", "orthogonal"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["skipped"], 50);

    assert_eq!(run_in(tmp.path(), &["verify", "--theorem", "7"]).status.code(), Some(2));
}
