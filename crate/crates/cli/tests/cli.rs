use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn peprec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peprec")).args(args).output().expect("run peprec")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn gen(dir: &Path, name: &str, n: usize, k: usize, count: usize, seed: u64) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap();
    let out = peprec(&[
        "gen-data", "--n", &n.to_string(), "--k", &k.to_string(), "--count", &count.to_string(),
        "--out", p, "--seed", &seed.to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p.to_string()
}

#[test]
fn gen_data_is_seeded() {
    let dir = TempDir::new().unwrap();
    let a = gen(dir.path(), "a.bin", 4, 2, 5, 3);
    let b = gen(dir.path(), "b.bin", 4, 2, 5, 3);
    let c = gen(dir.path(), "c.bin", 4, 2, 5, 4);
    let read = |p: &str| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn wmmse_against_itself_is_one() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.bin", 4, 2, 6, 1);
    let out = peprec(&["eval", "--policy", "wmmse", "--data", &data]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["row"]["se_ratio_mean"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn eval_writes_csv_and_json() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.bin", 4, 2, 4, 1);
    let stem = dir.path().join("zf");
    let out = peprec(&["eval", "--policy", "zf", "--data", &data, "--out", stem.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("zf.csv").exists());
    assert!(dir.path().join("zf.json").exists());
}

#[test]
fn gate_sets_exit_status() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.bin", 4, 2, 4, 1);
    let strict = ["eval", "--policy", "mrt", "--data", &data, "--min-ratio", "2"];
    assert!(peprec(&strict).status.success());
    let mut gated = strict.to_vec();
    gated.push("--gate");
    assert_eq!(peprec(&gated).status.code(), Some(1));
    let loose = ["eval", "--policy", "mrt", "--data", &data, "--min-ratio", "0", "--gate"];
    assert!(peprec(&loose).status.success());
}

#[test]
fn pe_check_passes_on_random_weights() {
    let out = peprec(&[
        "pe-check", "--arch", "gformer_2d", "--n", "4", "--k", "3", "--trials", "5", "--hidden", "8,8", "--heads",
        "2", "--gate",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert!(v["max_deviation"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn pe_check_fails_with_positional_encoding() {
    let out = peprec(&[
        "pe-check", "--arch", "transformer_1d", "--n", "4", "--k", "3", "--trials", "5", "--hidden", "8,8", "--heads",
        "2", "--perm", "user", "--positional-encoding", "--gate",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn train_then_eval_checkpoint() {
    let dir = TempDir::new().unwrap();
    let train = gen(dir.path(), "t.bin", 4, 2, 16, 1);
    let valid = gen(dir.path(), "v.bin", 4, 2, 8, 2);
    let ckpt = dir.path().join("m.json");
    let cfg = serde_json::json!({
        "spec": { "arch": "gformer_2d", "widths": [2, 8, 2], "heads": 2, "n": 4, "k": 2 },
        "train": [{ "path": train }],
        "valid": [{ "path": valid }],
        "epochs": 2,
        "batch_size": 8,
    });
    let cfg_path = dir.path().join("train.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let run = |seed: &str| {
        let out = peprec(&[
            "train", "--config", cfg_path.to_str().unwrap(), "--out", ckpt.to_str().unwrap(), "--seed", seed,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        json(&out)
    };
    let a = run("5");
    assert_eq!(a["n_train"], 16);
    assert!(ckpt.exists());
    let first = std::fs::read(&ckpt).unwrap();
    run("5");
    assert_eq!(first, std::fs::read(&ckpt).unwrap());

    let out = peprec(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", &valid]);
    assert!(out.status.success());
    let r = json(&out)["row"]["se_ratio_mean"].as_f64().unwrap();
    let best = a["best_valid_ratio"].as_f64().unwrap();
    assert!((r - best).abs() < 1e-9, "{r} vs {best}");
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("none.json");
    let out = peprec(&["train", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"spec\": 3}").unwrap();
    assert_eq!(peprec(&["sweep", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let data = gen(dir.path(), "d.bin", 4, 2, 2, 1);
    assert_eq!(peprec(&["eval", "--data", &data]).status.code(), Some(2));
}
