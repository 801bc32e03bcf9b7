use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn snu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snu")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small piano roll over the full 88-key range.
fn write_rolls(dir: &Path) -> PathBuf {
    let seq = |k: i64, len: i64| -> Value {
        (0..len)
            .map(|t| json!([48 + (t * k) % 24, 60 + (t + k) % 12, 67 + (t * 5 + k) % 7]))
            .collect()
    };
    let split = |base: i64, n: i64| -> Value { (0..n).map(|k| seq(base + k, 8 + k % 5)).collect() };
    let data = json!({
        "pitch_lo": 21,
        "pitch_hi": 108,
        "splits": {"train": split(0, 10), "valid": split(20, 3), "test": split(40, 3)}
    });
    let path = dir.join("rolls.json");
    fs::write(&path, data.to_string()).unwrap();
    path
}

fn write_config(dir: &Path, name: &str, cfg: Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn sequence_config(hidden_kind: &str, lr: f64, epochs: usize) -> Value {
    json!({
        "network": {
            "input": [88],
            "layers": [{"kind": hidden_kind, "units": 12}, {"kind": "dense_sigmoid", "units": 88}]
        },
        "data": {"kind": "piano_roll", "path": "rolls.json"},
        "train": {"optimizer": {"kind": "adam", "lr": lr}, "batch_size": 4, "epochs": epochs, "seed": 3},
        "output": "out"
    })
}

#[test]
fn train_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_rolls(dir.path());
    let cfg = write_config(dir.path(), "run.json", sequence_config("snu", 0.01, 3));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = snu(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["run.json", "curve.csv", "model.ckpt"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let curve = fs::read_to_string(a.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
    assert!(curve.starts_with("epoch,train_loss,valid_loss,metric,wall_seconds\n"));
    assert_eq!(curve, fs::read_to_string(b.join("curve.csv")).unwrap());

    let echoed = a.join("run.json");
    let text = fs::read_to_string(&echoed).unwrap();
    assert!(text.contains("\"batch_size\": 4") && text.contains("\"sigma_read\""));
    let c = dir.path().join("c");
    let o = snu(&["train", "--config", echoed.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(curve, fs::read_to_string(c.join("curve.csv")).unwrap());

    let o = snu(&[
        "eval",
        "--checkpoint",
        a.join("model.ckpt").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "sequence",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test mean frame NLL"));
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write_rolls(dir.path());
    let cfg = write_config(dir.path(), "run.json", sequence_config("snu", 0.01, 2));
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = snu(&["train", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("curve.csv")).unwrap()
    };
    assert_ne!(run("1", "s1"), run("2", "s2"));
}

#[test]
fn pcm_backend_writes_crossbars_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    write_rolls(dir.path());
    let cfg = write_config(dir.path(), "run.json", sequence_config("snu", 0.02, 2));
    let out = dir.path().join("hw");
    let o = snu(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--backend",
        "pcm",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["crossbar_0.pcm", "crossbar_1.pcm", "hist_0_1.csv", "hist_1_2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = fs::read_to_string(out.join("hist_0_2.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count\n"));
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 88 * 12);
}

#[test]
fn half_output_stub_evaluates_to_88_ln2() {
    let dir = tempfile::tempdir().unwrap();
    write_rolls(dir.path());
    let mut cfg = sequence_config("snu", 0.01, 0);
    cfg["network"]["layers"][1]["init"] = json!({"weight_gain": 0.0});
    let cfg = write_config(dir.path(), "stub.json", cfg);
    let out = dir.path().join("stub");
    let o = snu(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = snu(&[
        "eval",
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "sequence",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let nll: f64 = text.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!((nll - 88.0 * 2f64.ln()).abs() < 1e-6, "{text}");
}

#[test]
fn missing_data_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", sequence_config("snu", 0.01, 1));
    let o = snu(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&dir.path().join("rolls.json").display().to_string()), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_rolls(dir.path());
    let mut cfg = sequence_config("snu", 0.01, 1);
    cfg["train"]["learning_rate"] = json!(0.1);
    let cfg = write_config(dir.path(), "run.json", cfg);
    let o = snu(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn mismatched_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_rolls(dir.path());
    let cfg = write_config(dir.path(), "run.json", sequence_config("snu", 0.01, 1));
    let out = dir.path().join("m");
    assert!(snu(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let mut other = sequence_config("snu", 0.01, 1);
    other["network"]["layers"][0]["units"] = json!(13);
    let other = write_config(dir.path(), "other.json", other);
    let o = snu(&[
        "eval",
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--config",
        other.to_str().unwrap(),
        "--mode",
        "sequence",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layer 0"), "{}", stderr(&o));
}

#[test]
fn paramcount_reports_13350_and_52800_devices() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sequence_config("snu", 0.01, 1);
    cfg["network"]["layers"][0]["units"] = json!(150);
    let cfg = write_config(dir.path(), "jsb.json", cfg);
    let o = snu(&["check", "paramcount", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("13350"), "{text}");
    assert!(text.contains("26400 synaptic weights, 52800 PCM devices"), "{text}");
}

#[test]
fn gradcheck_passes_on_ssnu_and_lifcheck_on_random_neurons() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "network": {"input": [3], "layers": [
            {"kind": "ssnu", "units": 4, "decay_mode": "per_unit"},
            {"kind": "ssnu", "units": 2}
        ]},
        "data": {"kind": "piano_roll", "path": "unused.json"},
        "train": {"optimizer": {"kind": "sgd", "lr": 0.1}, "epochs": 1}
    });
    let cfg = write_config(dir.path(), "toy.json", cfg);
    let o = snu(&["check", "gradcheck", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("max relative error"));

    let o = snu(&["check", "lifcheck", "--neurons", "20", "--steps", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(" 0 mismatches"), "{}", stdout(&o));
}
