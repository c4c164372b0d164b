//! End-to-end tests of the `egain` binary: every subcommand on a tiny
//! 16x16 configuration, plus the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_egain"))
}

fn dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("egain-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "exit code mismatch\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The shared pipeline fixture: data -> pretrain -> train (off mode).
struct Fixture {
    root: PathBuf,
    manifest: String,
    gan: String,
    model: String,
}

fn fixture() -> Fixture {
    let root = dir("pipeline");
    let data = root.join("data");
    let manifest = data.join("manifest.json").display().to_string();
    assert_code(
        &run(&["make-data", "--out", data.to_str().unwrap(), "--n", "6", "--resolution", "16", "--seed", "3"]),
        0,
    );
    let gan_dir = root.join("gan");
    assert_code(
        &run(&[
            "pretrain",
            "--data",
            &manifest,
            "--out",
            gan_dir.to_str().unwrap(),
            "--resolution",
            "16",
            "--batch-size",
            "2",
            "--steps",
            "3",
            "--seed",
            "3",
            "--avg-latent-samples",
            "16",
        ]),
        0,
    );
    let train_dir = root.join("inv");
    let gan = gan_dir.join("gan.ckpt").display().to_string();
    assert_code(
        &run(&[
            "train",
            "--data",
            &manifest,
            "--gan",
            &gan,
            "--out",
            train_dir.to_str().unwrap(),
            "--resolution",
            "16",
            "--batch-size",
            "2",
            "--steps",
            "3",
            "--seed",
            "3",
            "--fusion",
            "off",
            "--avg-latent-samples",
            "16",
        ]),
        0,
    );
    let model = train_dir.join("inversion.ckpt").display().to_string();
    Fixture { root, manifest, gan, model }
}

#[test]
fn make_data_is_deterministic_and_validates() {
    let root = dir("mkdata");
    let a = root.join("a");
    let b = root.join("b");
    for out in [&a, &b] {
        assert_code(
            &run(&["make-data", "--out", out.to_str().unwrap(), "--n", "4", "--resolution", "16", "--seed", "9"]),
            0,
        );
    }
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("images/face_0003.png")).unwrap(),
        fs::read(b.join("images/face_0003.png")).unwrap(),
        "identical flags must give identical bytes"
    );
    assert_eq!(fs::read_dir(a.join("images")).unwrap().count(), 4);

    // power-of-two rule named in the message
    let bad = run(&["make-data", "--out", root.join("c").to_str().unwrap(), "--resolution", "33"]);
    assert_code(&bad, 2);
    assert!(
        String::from_utf8_lossy(&bad.stderr).contains("power of two"),
        "message must name the rule"
    );
}

#[test]
fn full_pipeline_commands() {
    let f = fixture();

    // logs and resolved configs exist
    assert!(f.root.join("gan/pretrain_log.jsonl").is_file());
    assert!(f.root.join("gan/resolved_config.json").is_file());
    let log = fs::read_to_string(f.root.join("inv/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    // every line is JSON with a total equal to the weighted term sum
    let cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.root.join("inv/resolved_config.json")).unwrap())
            .unwrap();
    let w = &cfg["loss_weights"];
    for line in log.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let total = rec["total"].as_f64().unwrap();
        let sum: f64 = ["d_reg", "w_reg", "l2", "lpips", "id", "avg_reg"]
            .iter()
            .map(|k| w[*k].as_f64().unwrap() * rec[*k].as_f64().unwrap())
            .sum();
        assert!(((total - sum) / total.abs().max(1e-12)).abs() < 1e-9);
    }

    // invert: off-mode model reproduces its baseline byte for byte
    let inv_out = f.root.join("inverted");
    let image = f.root.join("data/images/face_0001.png");
    assert_code(
        &run(&[
            "invert",
            "--model",
            &f.model,
            "--image",
            image.to_str().unwrap(),
            "--out",
            inv_out.to_str().unwrap(),
        ]),
        0,
    );
    for file in ["y0.png", "y.png", "delta.png", "codes.json"] {
        assert!(inv_out.join(file).is_file(), "{file} missing");
    }
    assert_eq!(
        fs::read(inv_out.join("y0.png")).unwrap(),
        fs::read(inv_out.join("y.png")).unwrap(),
        "fusion-off final image must equal the initial one"
    );
    let codes: Vec<Vec<f64>> =
        serde_json::from_str(&fs::read_to_string(inv_out.join("codes.json")).unwrap()).unwrap();
    assert_eq!(codes.len(), 6, "L = 2 * (log2(16) - 1)");
    assert!(codes.iter().all(|row| row.len() == 64));

    // evaluate
    let eval_out = f.root.join("eval");
    assert_code(
        &run(&[
            "evaluate",
            "--model",
            &f.model,
            "--data",
            &f.manifest,
            "--out",
            eval_out.to_str().unwrap(),
        ]),
        0,
    );
    let csv = fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("id,face_id,ssim,scc,vif,quality\n"), "exact CSV header");
    assert!(eval_out.join("grid.png").is_file());
    assert!(eval_out.join("metrics.json").is_file());

    // compare a report with itself: every column ties, all marked best
    let report = eval_out.join("metrics.json").display().to_string();
    let cmp_out = f.root.join("cmp");
    let out = run(&[
        "compare",
        "--reports",
        &report,
        &report,
        "--out",
        cmp_out.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches('*').count(), 10, "5 columns x 2 rows all tie-marked:\n{text}");
    assert!(cmp_out.join("comparison.csv").is_file());
    assert!(cmp_out.join("comparison.txt").is_file());

    // compare with disjoint id sets: validation failure
    let other = dir("otherdata");
    assert_code(
        &run(&["make-data", "--out", other.to_str().unwrap(), "--n", "3", "--resolution", "16", "--seed", "77"]),
        0,
    );
    // rename ids by rebuilding a manifest with different ids
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(other.join("manifest.json")).unwrap()).unwrap();
    for (i, e) in manifest["entries"].as_array_mut().unwrap().iter_mut().enumerate() {
        e["id"] = serde_json::Value::String(format!("other_{i}"));
    }
    fs::write(other.join("manifest.json"), manifest.to_string()).unwrap();
    let eval2 = f.root.join("eval2");
    assert_code(
        &run(&[
            "evaluate",
            "--model",
            &f.model,
            "--data",
            other.join("manifest.json").to_str().unwrap(),
            "--out",
            eval2.to_str().unwrap(),
        ]),
        0,
    );
    let disjoint = run(&[
        "compare",
        "--reports",
        &report,
        &eval2.join("metrics.json").display().to_string(),
    ]);
    assert_code(&disjoint, 2);
}

#[test]
fn missing_inputs_exit_2() {
    let root = dir("missing");
    let out = run(&[
        "pretrain",
        "--data",
        root.join("nope.json").to_str().unwrap(),
        "--out",
        root.join("o").to_str().unwrap(),
    ]);
    assert_code(&out, 2);

    let out = run(&[
        "train",
        "--data",
        root.join("nope.json").to_str().unwrap(),
        "--gan",
        root.join("nope.ckpt").to_str().unwrap(),
        "--out",
        root.join("o").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn invert_resolution_mismatch_exits_2() {
    let f = fixture();
    // a 32x32 image against a 16x16 model
    let other = dir("res32");
    assert_code(
        &run(&["make-data", "--out", other.to_str().unwrap(), "--n", "1", "--resolution", "32", "--seed", "5"]),
        0,
    );
    let out = run(&[
        "invert",
        "--model",
        &f.model,
        "--image",
        other.join("images/face_0000.png").to_str().unwrap(),
        "--out",
        other.join("inv").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn env_seed_is_used_when_no_flag() {
    let root = dir("envseed");
    let a = root.join("a");
    let b = root.join("b");
    let mut cmd = bin();
    cmd.env("EGAIN_SEED", "123");
    cmd.args(["make-data", "--out", a.to_str().unwrap(), "--n", "1", "--resolution", "16"]);
    assert!(cmd.output().unwrap().status.success());
    assert_code(
        &run(&["make-data", "--out", b.to_str().unwrap(), "--n", "1", "--resolution", "16", "--seed", "123"]),
        0,
    );
    assert_eq!(
        fs::read(a.join("images/face_0000.png")).unwrap(),
        fs::read(b.join("images/face_0000.png")).unwrap(),
        "EGAIN_SEED must act as the seed when no flag is given"
    );
}

#[test]
fn config_file_with_flag_override() {
    let root = dir("config");
    let data = root.join("data");
    assert_code(
        &run(&["make-data", "--out", data.to_str().unwrap(), "--n", "4", "--resolution", "16", "--seed", "3"]),
        0,
    );
    let cfg_path = root.join("cfg.toml");
    fs::write(
        &cfg_path,
        "resolution = 16\nbatch_size = 2\nsteps = 9\nseed = 3\navg_latent_samples = 16\n",
    )
    .unwrap();
    let out_dir = root.join("gan");
    // flag overrides the file's steps = 9
    assert_code(
        &run(&[
            "pretrain",
            "--data",
            data.join("manifest.json").to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--steps",
            "2",
        ]),
        0,
    );
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["steps"], 2, "flags win over the config file");
    assert_eq!(resolved["batch_size"], 2, "file values survive when not overridden");
    let log = fs::read_to_string(out_dir.join("pretrain_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}
