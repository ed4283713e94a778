//! CLI surface: subcommands succeed with exit code 0, failures produce a
//! machine-readable JSON error line and a nonzero exit.

use std::process::Command;

fn aba() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aba"))
}

#[test]
fn train_eval_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let config = dir.path().join("exp.conf");
    std::fs::write(
        &config,
        format!(
            "source = fixture\nmode = aba\niterations = 12\nwarmup = 2\nbatch_size = 8\n\
             adv_steps = 2\nclassifier_lr = 1e-3\nlayers = 1\nhidden_width = 4\n\
             kernel_set = 1,3\nout_dir = {}\n",
            out_dir.display()
        ),
    )
    .unwrap();

    let out = aba().args(["train"]).arg(&config).output().unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = out_dir.join("results.csv");
    assert!(results.exists());

    let ckpt = out_dir.join("classifier.ckpt");
    let out = aba().args(["eval"]).arg(&ckpt).arg(&config).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("source,"), "eval output: {stdout}");

    let report_out = dir.path().join("report.csv");
    let out = aba()
        .args(["report"])
        .arg(&results)
        .arg("--out")
        .arg(&report_out)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(report_out.exists());

    let embed_out = aba()
        .args(["embed"])
        .arg(&ckpt)
        .arg(&config)
        .args(["--n", "8"])
        .output()
        .unwrap();
    assert!(
        embed_out.status.success(),
        "embed failed: {}",
        String::from_utf8_lossy(&embed_out.stderr)
    );
    assert!(out_dir.join("embedding.svg").exists());
}

#[test]
fn sweep_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let config = dir.path().join("exp.conf");
    std::fs::write(
        &config,
        format!(
            "source = fixture\nmode = aba\niterations = 6\nwarmup = 1\nbatch_size = 8\n\
             adv_steps = 1\nclassifier_lr = 1e-3\nlayers = 1\nhidden_width = 4\n\
             kernel_set = 1\nout_dir = {}\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = aba()
        .args(["sweep"])
        .arg(&config)
        .args(["--param", "adv_steps", "--values", "0,1", "--seeds", "1"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("sweep.csv").exists());
}

#[test]
fn failure_prints_json_error_and_nonzero_exit() {
    let out = aba().args(["train", "/nonexistent/config"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let parsed: serde_json::Value = serde_json::from_str(line)
        .unwrap_or_else(|_| panic!("stderr not machine-readable: {stderr}"));
    assert!(parsed.get("error").is_some());
}

#[test]
fn bad_config_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "warp_drive = on\n").unwrap();
    let out = aba().args(["train"]).arg(&config).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warp_drive"), "stderr: {stderr}");
}
