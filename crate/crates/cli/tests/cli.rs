use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spdnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn outputs(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    manifest["outputs"].clone()
}

#[test]
fn budget_reports_the_merged_network() {
    let o = spdnn(&["budget"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("11014Ch_p^2 + 18Ch_p"));
    assert!(text.contains("leading root   10.4836"));
    assert!(text.contains("chosen Ch_p    10"));
    assert!(text.contains("1101580"));

    let o = spdnn(&["budget", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["polynomial"]["a"], 11014);
    assert_eq!(v["chosen"], 10);
    assert_eq!(v["target"], 1_210_496);
    assert_eq!(v["layers"].as_array().unwrap().len(), 13);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(spdnn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(spdnn(&["budget", "--spec", "no-such-network"]).status.code(), Some(2));
    assert_eq!(spdnn(&["budget", "--target", "lots"]).status.code(), Some(2));
    assert_eq!(spdnn(&["--threads", "0", "budget"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let o = spdnn(&["eval", "--pred", p(&missing), "--gt", p(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a directory"));
}

#[test]
fn merge_writes_graph_network_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let parents = dir.path().join("parents.json");
    fs::write(&parents, r#"[["3C", "5C"], ["3C", "7C"]]"#).unwrap();
    let out = dir.path().join("merged.json");
    let net = dir.path().join("net.json");
    let o = spdnn(&[
        "merge", "--parents", p(&parents), "--out", p(&out), "--network-out", p(&net), "--chp", "2", "--json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["nodes"], 5);
    assert_eq!(summary["order_preserved"], true);
    assert!(fs::read_to_string(&net).unwrap().contains("concat_inputs"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("merged.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "merge");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    // The sized network feeds straight back into budget.
    let o = spdnn(&["budget", "--spec", p(&net), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.get("polynomial").is_none());
    let o = spdnn(&["budget", "--spec", p(&out), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["polynomial"]["a"].as_u64().unwrap() > 0);
}

#[test]
fn datagen_and_augment_are_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for name in ["d1", "d2"] {
        let o = spdnn(&["datagen", "--seed", "4", "--count", "3", "--out", p(&root.join(name))]);
        assert!(o.status.success());
    }
    for f in ["eye_00002.pgm", "eye_00002.mask.pgm"] {
        assert_eq!(fs::read(root.join("d1").join(f)).unwrap(), fs::read(root.join("d2").join(f)).unwrap());
    }
    assert_eq!(outputs(&root.join("d1")), outputs(&root.join("d2")));
    fs::create_dir_all(root.join("d1/sub")).unwrap();
    fs::rename(root.join("d1/eye_00001.pgm"), root.join("d1/sub/eye_00001.pgm")).unwrap();
    fs::rename(root.join("d1/eye_00001.mask.pgm"), root.join("d1/sub/eye_00001.mask.pgm")).unwrap();
    for name in ["a1", "a2"] {
        let o = spdnn(&["augment", "--seed", "9", "--in", p(&root.join("d1")), "--out", p(&root.join(name))]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(outputs(&root.join("a1")), outputs(&root.join("a2")));
    for f in ["eye_00000.aug.pgm", "eye_00000.mask.pgm", "sub/eye_00001.aug.pgm"] {
        let a = fs::read(root.join("a1").join(f)).unwrap();
        assert_eq!(a, fs::read(root.join("a2").join(f)).unwrap(), "{f}");
    }
    let header = fs::read(root.join("a1/eye_00000.aug.pgm")).unwrap();
    assert!(header.starts_with(b"P5"));
    let text = String::from_utf8_lossy(&header[..16]).into_owned();
    assert!(text.contains("128 96") || text.contains("128\n96"), "{text}");
}

#[test]
fn train_infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    assert!(spdnn(&["datagen", "--seed", "2", "--count", "4", "--out", p(&data), "--width", "24", "--height", "16"])
        .status
        .success());
    let weights = root.join("model/w.spdn");
    let o = spdnn(&[
        "train", "--data", p(&data), "--chp", "1", "--epochs", "2", "--batch-size", "2", "--seed", "5",
        "--quiet", "--out", p(&weights),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(root.join("model/w.spdn.log")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.starts_with("1,"));
    assert_eq!(&fs::read(&weights).unwrap()[..4], b"SPDN");

    let preds = root.join("preds");
    let o = spdnn(&["infer", "--weights", p(&weights), "--in", p(&data), "--out", p(&preds)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(preds.join("eye_00003.mask.pgm").exists());

    let o = spdnn(&["eval", "--pred", p(&preds), "--gt", p(&data), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 12);
    assert_eq!(v[0]["metric"], "accuracy");
    let text = stdout(&spdnn(&["eval", "--pred", p(&data), "--gt", p(&data)]));
    assert!(text.contains("mcc"));
    assert!(text.contains("100.00%"));
}
