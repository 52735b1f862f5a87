use std::fs;
use std::path::Path;

use cutofflab::cli::{cmd_replicate, cmd_simulate, main_with_args, RunManifest};
use cutofflab::data::{load_csv, CsvOptions, Regime};

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("cutofflab").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_writes_full_panel_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("panel.csv");
    cmd_simulate(None, &out).unwrap();
    let ds = load_csv(&out, CsvOptions::default()).unwrap();
    assert_eq!(ds.len(), 4850);
    assert_eq!(ds.filter_regime(Regime::Before).events().len(), 53);
    assert_eq!(ds.filter_regime(Regime::After).events().len(), 44);

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("panel.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "simulate");
    assert_eq!(manifest.seed, Some(20170));
    assert_eq!(manifest.output_digests.len(), 1);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "seed = 7\nn_seasons = 2\nevents_per_season = [4, 5]\nregime_schedule = [\"before\", \"after\"]\n").unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    cmd_simulate(Some(&cfg), &a).unwrap();
    cmd_simulate(Some(&cfg), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(load_csv(&a, CsvOptions::default()).unwrap().len(), 9 * 50);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    // unreadable data is an I/O failure
    assert_eq!(
        run(&["estimate", "--data", p(&missing), "--outcome", "advanced", "--method", "local"]),
        1
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "not,a,panel\n1,2,3\n").unwrap();
    assert_eq!(run(&["estimate", "--data", p(&bad), "--outcome", "advanced", "--method", "local"]), 2);
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "n_qualify = 70\n").unwrap();
    assert_eq!(run(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("x.csv"))]), 2);
    assert_eq!(run(&["estimate", "--method", "local"]), 2);

    let data = dir.path().join("d.csv");
    cmd_simulate(None, &data).unwrap();
    assert_eq!(
        run(&["estimate", "--data", p(&data), "--outcome", "height", "--method", "local"]),
        2
    );
    // a window with no units on one side is an estimator failure
    assert_eq!(
        run(&[
            "estimate", "--data", p(&data), "--outcome", "advanced", "--method", "local", "--cutoff", "50.5",
            "--window", "50:51",
        ]),
        3
    );
    assert_eq!(
        run(&["estimate", "--data", p(&data), "--outcome", "advanced", "--method", "diffdisc", "--regime", "after"]),
        2
    );
}

#[test]
fn estimate_and_validate_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    cmd_simulate(None, &data).unwrap();

    let local = dir.path().join("local.json");
    let code = run(&[
        "estimate", "--data", p(&data), "--outcome", "advanced", "--method", "local", "--regime", "after",
        "--window", "30:31", "--permutations", "999", "--json", p(&local),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&local).unwrap()).unwrap();
    assert!(v["estimate"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("local.manifest.json").exists());

    for method in ["continuity", "diffdisc"] {
        let out = dir.path().join(format!("{method}.json"));
        let code = run(&[
            "estimate", "--data", p(&data), "--outcome", "advanced", "--method", method, "--covariates",
            "wc_points_before,home_event", "--json", p(&out), "--format", "json",
        ]);
        assert_eq!(code, 0, "{method}");
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["outcome_name"], "advanced");
    }

    let report = dir.path().join("validate.json");
    let code = run(&[
        "validate", "--data", p(&data), "--regime", "before", "--windows", "30:31,28:33", "--permutations", "499",
        "--json", p(&report),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["density_tests"].as_array().unwrap().len(), 2);
    assert!(!v["balance_rows"].as_array().unwrap().is_empty());
}

#[test]
fn replicate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = cmd_replicate(None, a.path(), 300).unwrap();
    let sb = cmd_replicate(None, b.path(), 300).unwrap();
    assert!(sa.artifacts.len() >= 10);
    assert_eq!(sa.summary_digest, sb.summary_digest);
    for f in &sa.artifacts {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.summary_digest, sa.summary_digest);
    assert_eq!(m.output_digests.len(), sa.artifacts.len());
}

#[test]
fn equilibrium_command_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let fig = dir.path().join("fig1.csv");
    assert_eq!(run(&["equilibrium", "--loss-penalty", "0.5", "--figure1", p(&fig), "--format", "json"]), 0);
    let text = fs::read_to_string(&fig).unwrap();
    assert!(text.starts_with("x,baseline,pos_expect,neg_expect\n"));
    assert_eq!(text.lines().count(), 82);
    assert_eq!(run(&["equilibrium", "--prize=-1"]), 2);
}
