use std::path::Path;
use std::process::{Command, Output};

use ubi_core::features::read_feature_records;

fn ubi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubi"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("ubi runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_fit_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubi(dir.path(), &["--out", "o", "synth", "--n", "1500", "--weeks", "8", "--event-drivers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let listed = String::from_utf8(o.stdout).unwrap();
    for name in ["events.jsonl", "claims.csv", "labels.csv", "features.csv", "truth.json", "synth_config.toml"] {
        assert!(listed.contains(name), "{name} not reported");
        assert!(dir.path().join("o").join(name).is_file());
    }

    let o = ubi(dir.path(), &["--out", "o", "fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for t in ["any", "weak", "medium", "strong"] {
        let json = std::fs::read_to_string(dir.path().join(format!("o/model_{t}.json"))).unwrap();
        assert!(json.contains("\"const\""), "{t}");
    }
    let o = ubi(dir.path(), &["--out", "o", "score"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores = std::fs::read_to_string(dir.path().join("o/scores.csv")).unwrap();
    let rows = scores.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1501);

    let o = ubi(dir.path(), &["--out", "o", "premium", "--loss", "1000", "--admin", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubi(dir.path(), &["--out", "o", "parse", "--events", "nope.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.jsonl"));
    let o = ubi(dir.path(), &["--config", "absent.toml", "report"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ubi(dir.path(), &["fit", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "alpha = 7\n").unwrap();
    let o = ubi(dir.path(), &["--config", "run.toml", "report"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("alpha"));
    let o = ubi(dir.path(), &["--timezone", "somewhere", "report"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn fit_failures_exit_3_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubi(dir.path(), &["--out", "o", "synth", "--n", "200", "--weeks", "4", "--event-drivers", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));

    // Claims follow a1 exactly, so a model on a1 alone separates.
    let feats = read_feature_records(std::fs::File::open(dir.path().join("o/features.csv")).unwrap()).unwrap();
    let mut a1: Vec<f64> = feats.iter().map(|r| r.values.a1).collect();
    a1.sort_by(f64::total_cmp);
    let cut = a1[a1.len() / 2];
    let mut claims = String::from("device,loss_size,ins_sum,culprit\n");
    for r in feats.iter().filter(|r| r.values.a1 > cut) {
        claims.push_str(&format!("{},10,1000,true\n", r.device_id));
    }
    std::fs::write(dir.path().join("sep_claims.csv"), claims).unwrap();
    let cfg = "out_dir = \"o\"\n[candidates]\nany = [\"a1\"]\nweak = [\"a1\"]\nmedium = [\"a1\"]\nstrong = [\"a1\"]\n";
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = ubi(dir.path(), &["--config", "run.toml", "fit", "--claims", "sep_claims.csv"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("separation") && err.contains("a1"), "{err}");

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let o = ubi(dir.path(), &["--out", "o", "fit", "--claims", "empty.csv"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("single-class"));
}
