use std::path::Path;
use std::process::{Command, Output};

fn siglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siglab")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.conf");
    std::fs::write(
        &path,
        "# tiny experiment\nnum_properties = 1\nvalues_per_property = 4\ncontext_size = 2\nsignal_length = 3\n\
         width = 6\npopulation = 4\nepisodes_per_eval = 20\neval_episodes = 40\niterations = 3\nruns = 2\n\
         metric_every = 1\n",
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn train_report_protocol_plot() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let o = siglab(&["train", "--config", &conf, "--out", out_s, "--seed", "3"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("accuracy"));
    for f in [
        "metrics.csv",
        "summary.csv",
        "config.txt",
        "checkpoints/run0_final.ckpt",
        "checkpoints/run1_final.ckpt",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(
        std::fs::read_to_string(out.join("config.txt"))
            .unwrap()
            .contains("master_seed = 3")
    );

    let csv = out.join("metrics.csv");
    let o = siglab(&["report", "--csv", csv.to_str().unwrap(), "--label", "tiny"]);
    assert!(o.status.success());
    let table = text(&o.stdout);
    assert_eq!(table.lines().count(), 11);
    assert!(table.lines().skip(1).all(|l| l.starts_with("tiny")));

    let ckpt = out.join("checkpoints/run0_final.ckpt");
    let proto = dir.path().join("proto");
    let o = siglab(&[
        "protocol",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        &conf,
        "--contexts",
        "0",
        "--samples",
        "50",
        "--out",
        proto.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("modal signal frequency per target"));
    assert!(
        std::fs::read_to_string(proto.join("emissions.csv"))
            .unwrap()
            .starts_with("target,context,signal,frequency")
    );
    assert!(proto.join("referents.csv").exists());

    let o = siglab(&["plot", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).lines().count(), 10);
    assert!(out.join("plots/accuracy.svg").exists());
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "runs = 1\nwidth = -4\n").unwrap();
    let o = siglab(&["train", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("line 2"), "{}", text(&o.stderr));

    let o = siglab(&["report", "--csv", "/nonexistent/metrics.csv"]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).starts_with("error:"));

    let conf = write_config(dir.path());
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let o = siglab(&["protocol", "--checkpoint", junk.to_str().unwrap(), "--config", &conf]);
    assert!(!o.status.success());

    let o = siglab(&["train", "--config", &conf, "--bogus"]);
    assert!(!o.status.success());
}

#[test]
fn bad_thread_env_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_siglab"))
        .env("SGLAB_THREADS", "zero")
        .args([
            "train",
            "--config",
            &conf,
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("SGLAB_THREADS"));
}
