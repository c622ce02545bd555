use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

use skewprod::cli::{parse_config, parse_config_with, run_experiment, ExperimentKind, Outcome, Overrides};
use skewprod::Error;

fn examples() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    v.sort();
    v
}

fn example(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)).unwrap()
}

fn issues(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(Error::Config(v)) => v.iter().map(ToString::to_string).collect(),
        other => panic!("expected config errors, got {other:?}"),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skewprod"))
}

#[test]
fn shipped_configs_round_trip() {
    let files = examples();
    assert!(files.len() >= 5);
    for p in files {
        let cfg = parse_config(&fs::read_to_string(&p).unwrap()).unwrap();
        let text = cfg.to_canonical();
        let again = parse_config(&text).unwrap();
        assert_eq!(again, cfg, "{}", p.display());
        assert_eq!(again.to_canonical(), text, "{}", p.display());
    }
}

#[test]
fn zero_dimensional_torus_is_rejected_with_its_line() {
    let msgs = issues("[experiment]\nkind = orbit\nseed = 1\n[model]\ngroup = torus:0\naction = rotation(0.1)\n");
    assert_eq!(msgs.len(), 1, "{msgs:?}");
    assert!(msgs[0].starts_with("line 5:"), "{msgs:?}");
    assert!(msgs[0].contains("dimension must be ≥ 1"), "{msgs:?}");
}

#[test]
fn every_problem_is_reported() {
    let text = "\
[experiment]
kind = orbits
n = -3
[model]
action = rotation(0.1)
sequence = geometric:1.5
colour = blue
action = rotation(0.2)
[skew]
cylinders = 0@0
";
    let msgs = issues(text);
    let expect = [
        ("line 0", "missing required key `seed`"),
        ("line 2", "experiment kind"),
        ("line 3", "n:"),
        ("line 6", "sequence"),
        ("line 7", "unknown key `colour`"),
        ("line 8", "duplicate key `action`"),
        ("line 10", "cylinder"),
    ];
    assert_eq!(msgs.len(), expect.len(), "{msgs:#?}");
    for (line, text) in expect {
        let found = msgs
            .iter()
            .any(|m| m.contains(text) && (line == "line 0" || m.starts_with(&format!("{line}:"))));
        assert!(found, "{line} {text}: {msgs:#?}");
    }
}

#[test]
fn group_must_match_the_action() {
    let msgs = issues("[experiment]\nkind = orbit\nseed = 1\n[model]\ngroup = torus:2\naction = rotation(0.1)\n");
    assert!(msgs[0].contains("does not match"), "{msgs:?}");
}

#[test]
fn seed_can_come_from_the_command_line() {
    let text = "[experiment]\nkind = orbit\n[model]\naction = rotation(0.1)\n";
    assert!(parse_config(text).is_err());
    let o = Overrides { seed: Some(11), out: Some("elsewhere".into()) };
    let cfg = parse_config_with(text, &o).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
}

#[test]
fn torus_example_passes_and_writes_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Overrides { seed: None, out: Some(tmp.path().to_path_buf()) };
    let cfg = parse_config_with(&example("random_rotations.cfg"), &o).unwrap();
    assert_eq!(cfg.kind, ExperimentKind::Equidist);
    let rec = run_experiment(&cfg).unwrap();
    assert_eq!(rec.outcome, Outcome::Pass);
    assert!(rec.out_dir.starts_with(tmp.path()));
    for name in ["report.json", "convergence.csv", "orbit.csv"] {
        let bytes = fs::read(rec.out_dir.join(name)).unwrap();
        assert_eq!(rec.digests[name], hex::encode(Sha256::digest(&bytes)), "{name}");
    }
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rec.out_dir.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["outcome"], "pass");
    assert_eq!(record["config"], cfg.to_canonical());
    let curve = fs::read_to_string(rec.out_dir.join("convergence.csv")).unwrap();
    assert!(curve.starts_with("N,statistic\n100,"));
    assert!(!curve.contains('\r'));
}

#[test]
fn same_config_twice_gives_identical_digests() {
    let text = "[experiment]\nkind = skew-test\nseed = 5\nn = 20000\n[model]\naction = translation(su2; gens=haar:2)\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let o = Overrides { seed: None, out: Some(dir.to_path_buf()) };
        run_experiment(&parse_config_with(text, &o).unwrap()).unwrap()
    };
    let (x, y) = (run(a.path()), run(b.path()));
    assert_eq!(x.digests, y.digests);
    assert_eq!(x.payload, y.payload);
    assert_eq!(x.out_dir.file_name(), y.out_dir.file_name());
}

#[test]
fn finite_uniform_law_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[experiment]\nkind = orbit\nseed = 1\nn = 500\n[model]\naction = rotation(0.41421356237309503)\nsequence = uniform:4\n[output]\ndir = {}\n",
        tmp.path().display()
    );
    let rec = run_experiment(&parse_config(&text).unwrap()).unwrap();
    assert_eq!(rec.outcome, Outcome::Complete);
    assert_eq!(rec.warnings.len(), 1);
    assert!(rec.warnings[0].contains("uniform:4"));
}

#[test]
fn module_errors_carry_the_config() {
    let text = "[experiment]\nkind = equidist\nseed = 1\n[model]\naction = doubling-fixture\n";
    let err = run_experiment(&parse_config(text).unwrap()).unwrap_err();
    let Error::Experiment { config, source } = &err else {
        panic!("{err:?}")
    };
    assert!(config.contains("action = doubling-fixture"));
    assert!(source.to_string().contains("not invertible"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
    let status = |args: &[&str]| bin().args(args).arg("--out").arg(tmp.path()).output().unwrap();

    let fail = status(&["equidist", "--config", dir.join("finite_subgroup.cfg").to_str().unwrap()]);
    assert_eq!(fail.status.code(), Some(1));

    let wrong_kind = status(&["folner", "--config", dir.join("finite_subgroup.cfg").to_str().unwrap()]);
    assert_eq!(wrong_kind.status.code(), Some(2));

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "[experiment]\nkind = orbit\nseed = 1\n[model]\ngroup = torus:0\naction = rotation(0.1)\n").unwrap();
    let out = status(&["orbit", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));

    let internal = tmp.path().join("internal.cfg");
    fs::write(&internal, "[experiment]\nkind = orbit\nseed = 1\n[model]\naction = doubling-fixture\n").unwrap();
    assert_eq!(status(&["orbit", "--config", internal.to_str().unwrap()]).status.code(), Some(3));

    let ok = status(&["orbit", "--config", dir.join("orbit_s3.cfg").to_str().unwrap(), "--seed", "4", "--json"]);
    assert_eq!(ok.status.code(), Some(0));
    let rec: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(rec["outcome"], "complete");
    assert!(rec["config"].as_str().unwrap().contains("seed = 4"));

    assert_eq!(bin().arg("list-groups").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
}

#[test]
fn help_documents_every_key() {
    let help = bin().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&help.stdout);
    for (section, key, _) in skewprod::cli::config::KEYS {
        assert!(text.contains(&format!("[{section}]")), "{section}");
        assert!(text.contains(key), "{key}");
    }
}
