use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aurascreen(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_aurascreen")).args(args).current_dir(cwd).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn world_campaign_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    aurascreen(&["world", "--out", "w", "--size", "600", "--seed", "2"], d);
    aurascreen(&["campaign", "--config", "w/campaign.json", "--out", "a"], d);
    aurascreen(&["campaign", "--config", "w/campaign.json", "--out", "b"], d);
    for name in ["report.json", "shortlist.csv", "score_distribution.csv", "manifest.json"] {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap(), "{name}");
    }
    let shortlist = fs::read_to_string(d.join("a/shortlist.csv")).unwrap();
    assert!(shortlist.starts_with("rank,id,smiles,stage1_score,stage2_score,"), "{shortlist}");

    let out = aurascreen(&["report", "--input", "a/report.json", "--out", "c", "--top", "3"], d);
    assert!(String::from_utf8_lossy(&out.stdout).contains("target SYN2"));
    for name in ["shortlist.csv", "score_distribution.csv"] {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("c").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn eval_prints_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut scores = String::from("id,score\n");
    let mut labels = String::from("id,active\n");
    for i in 0..200 {
        scores.push_str(&format!("c{i},{}\n", -(i as f64)));
        labels.push_str(&format!("c{i},{}\n", u8::from([0, 1, 50, 150].contains(&i))));
    }
    fs::write(d.join("s.csv"), scores).unwrap();
    fs::write(d.join("l.csv"), labels).unwrap();
    let out = aurascreen(&["eval", "--scores", "s.csv", "--labels", "l.csv", "--fractions", "0.01,0.05"], d);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["enrichment"]["0.01"], 50.0);
    assert_eq!(v["positives"], 4);
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"target_id":"T"}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aurascreen"))
        .args(["campaign", "--config", "c.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
