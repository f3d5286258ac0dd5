use std::path::Path;
use std::process::{Command, Output};

fn ssil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssil")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: [&str; 12] = [
    "--set",
    "run.eval_every=200",
    "--set",
    "run.eval_episodes=3",
    "--set",
    "agent.warmup_steps=150",
    "--set",
    "agent.batch_size=32",
    "--set",
    "agent.hidden=[16]",
    "--set",
    "demos.episodes=6",
];

#[test]
fn demos_train_eval_curves_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let demos = dir.path().join("demos/pick.txt");
    let out = ok(&ssil(&["gen-demos", "--env", "pick_place2d", "--episodes", "5", "--with-actions", "--seed", "3", "--out", s(&demos)]));
    assert!(out.contains("wrote 5 episodes"), "{out}");

    let run = dir.path().join("run");
    let mut args = vec!["train", "--env", "pick_place2d", "--variant", "ac_bc", "--alpha", "0.5", "--k", "3"];
    args.extend(["--demos", s(&demos), "--steps", "400", "--seed", "7", "--seeds", "2", "--out", s(&run)]);
    args.extend(TINY);
    let out = ok(&ssil(&args));
    assert!(out.contains("pick_place2d ac_bc"), "{out}");

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let cfg = &report["config"];
    assert_eq!(cfg["agent"]["alpha"], 0.5);
    assert_eq!(cfg["agent"]["k"], 3);
    assert_eq!(cfg["run"]["seed"], 7);
    assert_eq!(cfg["demos"]["path"], s(&demos));
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);

    let header = std::fs::read_to_string(run.join("seed_8.csv")).unwrap();
    assert!(header.starts_with("step,eval_success,eval_return,updates,critic_loss,actor_objective,q_mean,target_mean,actor_penalty\n"));

    let out = ok(&ssil(&["eval", "--checkpoint", s(&run.join("seed_7.agent.json")), "--episodes", "4"]));
    assert!(out.contains("env pick_place2d episodes 4 success_rate"), "{out}");

    let curves = dir.path().join("curves");
    ok(&ssil(&["curves", "--in", s(dir.path()), "--out", s(&curves)]));
    let agg = std::fs::read_to_string(curves.join("curves_aggregate.csv")).unwrap();
    assert!(agg.lines().nth(1).unwrap().starts_with("run,200,2,"), "{agg}");
}

#[test]
fn config_file_then_set_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "env = \"reach2d\"\nagent.variant = \"base_ac\"\nagent.k = 2\nagent.tau = 0.02\nrun.steps = 300\nrun.n_seeds = 1\n").unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train", "--config", s(&cfg), "--set", "agent.tau=0.03", "--set", "agent.k=4", "--k", "6", "--out", s(&run)];
    args.extend(TINY);
    ok(&ssil(&args));
    let text = std::fs::read_to_string(run.join("config.txt")).unwrap();
    for line in ["agent.k = 6", "agent.tau = 0.03", "run.steps = 300", "agent.variant = \"base_ac\""] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    for args in [
        vec!["train", "--set", "agent.alpah=1", "--out", out],
        vec!["train", "--env", "cube3d", "--out", out],
        vec!["train", "--steps", "0", "--out", out],
        vec!["eval", "--checkpoint", "/nonexistent/agent.json"],
        vec!["suite", "--name", "everything", "--out", out],
        vec!["curves", "--in", out, "--out", out],
    ] {
        let o = ssil(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn failed_cell_gives_nonzero_exit_and_rerun_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("suite");
    // block one seed's output so that cell reports a failure
    let blocked = out.join("actor_ssil/seed_0.csv");
    std::fs::create_dir_all(&blocked).unwrap();
    std::fs::write(blocked.join("x"), "").unwrap();
    let mut args = vec!["suite", "--name", "ablation", "--seeds", "1", "--out", s(&out), "--set", "run.steps=300"];
    args.extend(TINY);
    let o = ssil(&args);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("actor_ssil"));

    std::fs::remove_dir_all(&blocked).unwrap();
    let text = ok(&ssil(&args));
    assert!(text.lines().any(|l| l.starts_with("base_ac") && l.contains("reused")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("actor_ssil") && !l.contains("reused")), "{text}");
}
