use std::path::Path;
use std::process::{Command, Output};

fn usac(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_usac"))
        .args(args)
        .env("USAC_OUT_DIR", out_dir)
        .env_remove("USAC_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
env = "pendulum"
total_steps = 200
eval_every = 100
eval_episodes = 2
seed = 4
record_wall_clock = false

[estimation]
pairs = 3
rollouts = 2

[agent]
hidden = [16, 16]
batch_size = 32
warmup_steps = 50
"#;

#[test]
fn presets_lists_and_shows() {
    let dir = tempfile::tempdir().unwrap();
    let o = usac(&["presets"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["full-scale", "pendulum-sac", "hopper", "protocol-table"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
    let o = usac(&["presets", "--show", "halfcheetah"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("kappa = -0.33"));
    assert!(!usac(&["presets", "--show", "nope"], dir.path()).status.success());
}

#[test]
fn train_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = usac(
            &[
                "train",
                "--config",
                cfg.to_str().unwrap(),
                "--out-dir",
                out.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("status: completed"));
    }
    let csv_a = std::fs::read_to_string(a.join("run.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(b.join("run.csv")).unwrap());
    assert!(csv_a.starts_with("# config_hash="));
    assert_eq!(csv_a.lines().count(), 2 + 3);
}

#[test]
fn train_checkpoint_and_resume_match_an_unbroken_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let ck = dir.path().join("half.ckpt");
    let full = dir.path().join("full");
    let resumed = dir.path().join("resumed");

    let o = usac(
        &["train", "--config", cfg, "--out-dir", full.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success());
    let o = usac(
        &[
            "train",
            "--config",
            cfg,
            "--total-steps",
            "100",
            "--checkpoint-out",
            ck.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = usac(
        &[
            "train",
            "--config",
            cfg,
            "--resume",
            ck.to_str().unwrap(),
            "--out-dir",
            resumed.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = |p: &Path| std::fs::read_to_string(p.join("run.csv")).unwrap();
    assert_eq!(body(&full), body(&resumed));

    // A checkpoint only resumes under the configuration that wrote it.
    let o = usac(
        &[
            "train",
            "--config",
            cfg,
            "--seed",
            "5",
            "--resume",
            ck.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn grid_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let base: String = TINY
        .lines()
        .map(|l| match l.strip_prefix('[') {
            Some(rest) => format!("[base.{rest}"),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let spec = format!("kappa_critic = [-0.831559, 0.5]\nkappa_actor = [0.0]\nseeds = [1, 2]\n\n[base]\n{base}\n");
    let path = dir.path().join("grid.toml");
    std::fs::write(&path, spec).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_usac"))
        .args(["grid", "--spec", path.to_str().unwrap()])
        .env("USAC_OUT_DIR", dir.path().join("out"))
        .env("USAC_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = std::fs::read_to_string(dir.path().join("out/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 2 + 2);
    assert!(grid.lines().nth(1).unwrap().starts_with("cell,rule_critic,rule_actor"));
    assert!(dir.path().join("out/runs/cell001_seed2.csv").exists());
    assert!(stdout(&o).contains("best cell:"));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = usac(&["verify"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(usac(&["train"], dir.path()).status.code(), Some(1));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "total_steps = 100\neval_every = 30\n").unwrap();
    let o = usac(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eval_every"));
}
