use std::path::Path;
use std::process::{Command, Output};

use celltune::harness::output::sha256_hex;

fn celltune(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_celltune"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn celltune")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = celltune(&["volte-pc", "train", "--bogus"], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn missing_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = celltune(
        &["son-fm", "train", "--config", dir.path().join("absent.toml").to_str().unwrap()],
        &out,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_value_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[agent]\nlearning_rate = 1.5\n").unwrap();
    let out = dir.path().join("run");
    let o = celltune(&["volte-pc", "train", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    std::fs::write(&cfg, "[agent]\nlearnig_rate = 0.2\n").unwrap();
    let o = celltune(&["volte-pc", "train", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn baseline_in_wrong_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = celltune(&["son-fm", "evaluate", "--algorithm", "fpa"], &dir.path().join("r"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_then_evaluate_reads_checkpoint_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = celltune(&["volte-pc", "train", "--episodes", "30", "--emit-plot-data"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "metrics.csv", "qtable.csv", "plot_data.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ckpt = out.join("qtable.csv");
    let before = sha256_hex(&std::fs::read(&ckpt).unwrap());

    let eval_out = dir.path().join("eval");
    let o = celltune(
        &["volte-pc", "evaluate", "--episodes", "20", "--checkpoint", ckpt.to_str().unwrap()],
        &eval_out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sha256_hex(&std::fs::read(&ckpt).unwrap()), before);
    assert!(stdout(&o).contains("retainability"));

    // Plot data pairs the run with the fixed-power reference.
    let plot = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert!(plot.starts_with("algorithm,tti,gamma_eff_db\n"));
    assert!(plot.lines().any(|l| l.starts_with("proposed,")));
    assert!(plot.lines().any(|l| l.starts_with("fpa,")));
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = celltune(&["volte-pc", "evaluate"], &dir.path().join("empty"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn son_sweep_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[run]\ntrain_episodes = 10\n\n[dqn]\nlearning_rate = 0.001\n").unwrap();
    let o = celltune(
        &["son-fm", "sweep", "--config", cfg.to_str().unwrap(), "--q", "5,10,50", "--episodes", "5"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("algorithm,q,metric,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 3 algorithms x 3 values x 8 metrics.
    assert_eq!(rows.len(), 72);
    for alg in ["proposed", "fifo", "random"] {
        for q in ["5", "10", "50"] {
            let n = rows.iter().filter(|r| r[0] == alg && r[1] == q).count();
            assert_eq!(n, 8, "{alg} q={q}");
        }
    }
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn sweep_flag_must_match_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = celltune(&["volte-pc", "sweep", "--q", "5"], &dir.path().join("s"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_same_trace_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = celltune(&["son-fm", "evaluate", "--algorithm", "fifo", "--episodes", "50", "--seed", seed], &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("trace.csv")).unwrap()
    };
    let a = run("a", "3");
    assert_eq!(a, run("b", "3"));
    assert_ne!(a, run("c", "4"));
}
