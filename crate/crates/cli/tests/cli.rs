use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
name = "tiny"
seed = 11
output_dir = "from-config"

[synthetic]
num_hosts = 2
num_days = 4
spike_prob_per_step = 0.002
spike_magnitude = 0.3

[ddpg]
warmup_steps = 200
batch_size = 16
replay_capacity = 5000
"#;

fn reclaim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reclaim")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = reclaim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let out = tmp.path().join("from-config");

    let generated = ok(&["generate", s(&config)]);
    assert!(generated.contains("2 hosts x 4 days"), "{generated}");
    assert!(out.join("traces.csv").is_file() && out.join("capacities.csv").is_file());

    let trained = ok(&["train", s(&config)]);
    // Three of four days go to training, 480 steps each.
    assert!(trained.contains("trained on 1440 steps"), "{trained}");
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1441);
    assert!(log.starts_with("step,critic_mae,mean_reward,mean_margin"));
    for metric in ["cpu", "ram"] {
        let text = fs::read_to_string(out.join(format!("agent_{metric}.ckpt"))).unwrap();
        reclaim_core::DdpgAgent::from_checkpoint(&text).unwrap();
    }

    let evaluated = ok(&["evaluate", s(&config)]);
    for name in ["releaser", "fixed:0.05", "random", "scavenger", "feedback:0.05"] {
        assert!(
            evaluated.lines().any(|l| l.starts_with(name)),
            "missing {name}: {evaluated}"
        );
        let dir = out.join("eval").join(name.replace(':', "_"));
        for f in ["report.json", "ledger.csv", "margins.csv", "cdf_cpu.csv", "cdf_ram.csv"] {
            assert!(dir.join(f).is_file(), "{}", dir.join(f).display());
        }
    }
    assert!(out.join("comparison.csv").is_file());
}

fn console_net(stdout: &str, strategy: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.split_whitespace().next() == Some(strategy))
        .unwrap();
    line.split_whitespace().nth(3).unwrap().parse().unwrap()
}

fn ledger_net(path: &Path) -> (f64, usize) {
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    (rows.iter().sum(), rows.len())
}

#[test]
fn console_net_matches_ledger_sums() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    ok(&["generate", s(&config)]);
    ok(&["train", s(&config)]);
    let stdout = ok(&["evaluate", s(&config)]);
    for (name, slug) in [
        ("releaser", "releaser"),
        ("fixed:0.05", "fixed_0.05"),
        ("scavenger", "scavenger"),
    ] {
        let (sum, rows) = ledger_net(&tmp.path().join("from-config/eval").join(slug).join("ledger.csv"));
        let tolerance = 0.5e-4 * (rows + 1) as f64;
        let shown = console_net(&stdout, name);
        assert!(
            (shown - sum).abs() <= tolerance,
            "{name}: console {shown} vs ledger {sum}"
        );
    }
}

#[test]
fn output_dir_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let other = tmp.path().join("elsewhere");
    ok(&["generate", s(&config), "--output-dir", s(&other)]);
    assert!(other.join("traces.csv").is_file());
    assert!(!tmp.path().join("from-config").exists());
}

#[test]
fn fixed_only_evaluation_needs_no_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace(
        "[ddpg]",
        "[strategies]\ncpu = \"fixed:0.05\"\nram = \"fixed:0.05\"\ncompare = []\n\n[ddpg]",
    );
    let config = write_config(tmp.path(), &text);
    let stdout = ok(&["evaluate", s(&config)]);
    let rows: Vec<&str> = stdout
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("baseline:"))
        .collect();
    assert_eq!(rows.len(), 1, "{stdout}");
    assert!(rows[0].starts_with("fixed:0.05"));
    let json = fs::read_to_string(tmp.path().join("from-config/eval/fixed_0.05/report.json")).unwrap();
    assert!(json.contains("\"net_saving\""));
}

#[test]
fn missing_seed_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &TINY.replace("seed = 11\n", ""));
    let out = reclaim(&["generate", s(&config)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seed"), "{err}");
    assert!(!tmp.path().join("from-config").exists());
}

#[test]
fn evaluate_without_checkpoints_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let out = reclaim(&["evaluate", s(&config)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn missing_config_file_fails_cleanly() {
    let out = reclaim(&["train", "/nonexistent/scenario.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        ok(&["generate", s(&config), "--output-dir", s(dir)]);
        ok(&["train", s(&config), "--output-dir", s(dir)]);
    }
    for f in ["traces.csv", "agent_cpu.ckpt", "agent_ram.ckpt", "train_log.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
