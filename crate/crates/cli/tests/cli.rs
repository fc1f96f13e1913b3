use std::path::Path;
use std::process::{Command, Output};

use fshawkes::io::{load_events, PosteriorFile, RunConfig};

fn fshawkes(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fshawkes"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = fshawkes(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Fixture config with a short horizon and small solver budgets.
fn quick_config(dir: &Path) {
    let mut cfg = RunConfig::fixture();
    cfg.horizon = Some(150.0);
    cfg.solver.iterations = 15;
    cfg.solver.nodes_per_interval = 8;
    cfg.solver.eval_nodes = 10;
    cfg.solver.draws = 10;
    std::fs::write(dir.join("cfg.toml"), cfg.to_toml()).unwrap();
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        fshawkes(dir.path(), &["fixture", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(
        fshawkes(dir.path(), &["transmogrify"]).status.code(),
        Some(2)
    );
    assert_eq!(fshawkes(dir.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(fshawkes(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn fixture_command_emits_the_fixture_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["fixture"]);
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::fixture());
    let out = ok(dir.path(), &["fixture", "--seed", "7"]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("seed = 7\n"));
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quick_config(d);
    ok(
        d,
        &[
            "simulate", "--config", "cfg.toml", "--seed", "4", "--out", "a.csv",
        ],
    );
    ok(
        d,
        &[
            "simulate", "--config", "cfg.toml", "--seed", "4", "--out", "b.csv",
        ],
    );
    ok(
        d,
        &[
            "simulate", "--config", "cfg.toml", "--seed", "5", "--out", "c.csv",
        ],
    );
    let a = std::fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.csv")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.csv")).unwrap());
    let data = load_events(&d.join("a.csv")).unwrap();
    assert_eq!((data.dims(), data.states(), data.horizon()), (2, 2, 150.0));
}

#[test]
fn fixture_simulate_fit_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quick_config(d);
    ok(
        d,
        &["simulate", "--config", "cfg.toml", "--out", "train.csv"],
    );
    ok(
        d,
        &[
            "simulate", "--config", "cfg.toml", "--seed", "2", "--out", "test.csv",
        ],
    );
    ok(
        d,
        &[
            "fit-mf",
            "--config",
            "cfg.toml",
            "--events",
            "train.csv",
            "--out",
            "mf.csv",
            "--trace",
            "mf_trace.csv",
        ],
    );
    ok(
        d,
        &[
            "fit-gibbs",
            "--config",
            "cfg.toml",
            "--events",
            "train.csv",
            "--out",
            "gibbs.csv",
            "--threads",
            "1",
        ],
    );

    let mf = PosteriorFile::load(&d.join("mf.csv")).unwrap();
    assert_eq!(mf.samples.len(), 10);
    assert!(mf.factors.is_some());
    let gibbs = PosteriorFile::load(&d.join("gibbs.csv")).unwrap();
    assert!(gibbs.factors.is_none());
    assert!(!gibbs.samples.is_empty());
    let cfg = RunConfig::load(&d.join("cfg.toml")).unwrap();
    assert_eq!(mf.config_hash, cfg.hash());

    for post in ["mf.csv", "gibbs.csv"] {
        let out = ok(
            d,
            &[
                "evaluate",
                "--config",
                "cfg.toml",
                "--events",
                "test.csv",
                "--posterior",
                post,
            ],
        );
        let report = String::from_utf8(out.stdout).unwrap();
        for key in [
            "loglik_point_process,all,",
            "loglik_state,all,",
            "ks_p_value,1,",
            "ks_p_value,2,",
        ] {
            assert!(report.contains(key), "{report}");
        }
        let out = ok(
            d,
            &[
                "qq",
                "--config",
                "cfg.toml",
                "--events",
                "test.csv",
                "--posterior",
                post,
            ],
        );
        let qq = String::from_utf8(out.stdout).unwrap();
        assert!(qq.starts_with("dim,rank,theoretical,empirical\n1,1,"));
    }
    let trace = std::fs::read_to_string(d.join("mf_trace.csv")).unwrap();
    assert!(trace.lines().count() >= 2);
    ok(
        d,
        &[
            "evaluate",
            "--config",
            "cfg.toml",
            "--events",
            "test.csv",
            "--posterior",
            "mf.csv",
            "--influence",
            "f.csv",
            "--out",
            "r.csv",
        ],
    );
    let f = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert_eq!(f.lines().count(), 1 + 2 * 2 * 2 * 601);
}

/// A one-dimensional, two-state file written by hand, without the
/// preamble comments, as a user would supply external data.
#[test]
fn user_supplied_events_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = String::from("time,dim,state\n");
    let mut t = 0.0;
    for n in 0..300 {
        t += 0.37 + 0.29 * ((n * 7919) % 13) as f64 / 13.0;
        let state = if (n / 40) % 2 == 0 { 1 } else { 2 };
        text.push_str(&format!("{t},1,{state}\n"));
    }
    text.push_str(&format!("{},end,1\n", t + 1.0));
    std::fs::write(d.join("user.csv"), text).unwrap();
    let cfg = "seed = 11\n[basis]\nsupport_end = 3.0\n[[basis.functions]]\nalpha = 2.0\nbeta = 5.0\nscale = 3.0\nshift = 0.0\n[prior]\nalpha = [1.0, 1.0]\nsigma2 = 1.0\n[solver]\niterations = 10\nnodes_per_interval = 5\neval_nodes = 5\n";
    std::fs::write(d.join("user.toml"), cfg).unwrap();
    ok(
        d,
        &[
            "fit-mf",
            "--config",
            "user.toml",
            "--events",
            "user.csv",
            "--out",
            "post.csv",
        ],
    );
    let out = ok(
        d,
        &[
            "evaluate",
            "--config",
            "user.toml",
            "--events",
            "user.csv",
            "--posterior",
            "post.csv",
        ],
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("events,all,300"));
}

#[test]
fn malformed_inputs_exit_1_with_row_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quick_config(d);
    std::fs::write(
        d.join("bad.csv"),
        "time,dim,state\n1.0,1,1\n0.5,2,1\n3,end,1\n",
    )
    .unwrap();
    let out = fshawkes(
        d,
        &["fit-mf", "--config", "cfg.toml", "--events", "bad.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3"));
    std::fs::write(d.join("broken.toml"), "seed = 1\n[prior]\nsigma2 = -1\n").unwrap();
    let out = fshawkes(d, &["simulate", "--config", "broken.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let out = fshawkes(
        d,
        &[
            "fit-gibbs",
            "--config",
            "cfg.toml",
            "--events",
            "missing.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}
