use std::path::Path;
use std::process::{Command, Output};

fn adg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn adg")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &[&str] = &[
    "--set",
    "synth.users=2",
    "--set",
    "synth.windows_per_activity=6",
    "--set",
    "train.epochs=3",
    "--set",
    "train.phase_len=1",
    "--set",
    "train.batch_size=8",
    "--set",
    "model.conv_channels=[2,3]",
    "--set",
    "model.gcn_widths=[4,4]",
];

fn train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    adg(&args)
}

#[test]
fn train_writes_outputs_and_eval_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = train(&out, &["--mode", "fusion", "--mode", "baseline"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "report.txt", "config.resolved.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    for fold in ["A", "B"] {
        for m in ["fusion", "baseline"] {
            assert!(out.join("folds").join(fold).join(format!("{m}.ckpt")).is_file());
        }
    }
    let svgs = std::fs::read_dir(out.join("confusion")).unwrap().count();
    assert_eq!(svgs, 4, "fusion has three graphs, baseline one");
    let snap = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(snap.contains("train.epochs = 3 (--set)"));

    let e = adg(&["eval", out.to_str().unwrap()]);
    assert!(e.status.success(), "{}\n{}", stdout(&e), stderr(&e));
    assert!(stdout(&e).contains("max |reported - rescored|"));

    let r = adg(&["report", out.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(stdout(&r), std::fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn eval_rejects_tampered_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(train(&out, &["--mode", "single:L"]).status.success());
    let victim = out.join("folds/A/single-L.ckpt");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&victim, bytes).unwrap();
    let e = adg(&["eval", out.to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(1));
    assert!(stderr(&e).contains("single-L.ckpt"), "{}", stderr(&e));
}

#[test]
fn report_on_empty_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = adg(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("report.json"));
}

#[test]
fn missing_layout_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(&dir.path().join("run"), &["--set", "dataset.layout=\"no/such/thing.layout\""]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/thing.layout"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_bad_overrides_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(&dir.path().join("run"), &["--set", "train.epoch=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
    let o = train(&dir.path().join("run"), &["--set", "train.epochs"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn environment_overrides_sit_between_file_and_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--out", out.to_str().unwrap(), "--mode", "baseline"];
    args.extend_from_slice(TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_adg"))
        .args(&args)
        .env("RUST_LOG", "warn")
        .env("ADG__TRAIN__EPOCHS", "2")
        .env("ADG__TRAIN__BATCH_SIZE", "6")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(snap.contains("train.batch_size = 6 (env ADG__TRAIN__BATCH_SIZE)"));
    // --set wins over the environment
    assert!(snap.contains("\nepochs = 3\n"), "{snap}");
}

#[test]
fn divergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = train(&out, &["--mode", "fusion", "--set", "train.optimizer.lr=1e30"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
    assert!(out.join("divergence.txt").is_file());
}

#[test]
fn gradcheck_sign_flip_names_the_op() {
    let o = adg(&["gradcheck", "--instances", "2", "--sign-flip", "conv1d"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("conv1d"), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn gen_synth_cache_trains_like_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("synth.adgc");
    let mut args = vec!["gen-synth", "--out", cache.to_str().unwrap()];
    args.extend_from_slice(TINY);
    let g = adg(&args);
    assert!(g.status.success(), "{}", stderr(&g));
    assert!(stdout(&g).contains("48 windows"));

    let direct = dir.path().join("direct");
    let cached = dir.path().join("cached");
    let set_cache = format!("dataset.cache=\"{}\"", cache.display());
    assert!(train(&direct, &["--mode", "single:A"]).status.success());
    assert!(train(&cached, &["--mode", "single:A", "--set", &set_cache]).status.success());
    // the accuracy lines are enough to tell two runs apart
    let read = |d: &Path| -> Vec<String> {
        std::fs::read_to_string(d.join("report.json"))
            .unwrap()
            .lines()
            .filter(|l| l.contains("\"accuracy\""))
            .map(|l| l.trim().to_string())
            .collect()
    };
    assert_eq!(read(&direct), read(&cached));
}

#[test]
fn ingest_refuses_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = adg(&["ingest", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = adg(&["ingest", "--dataset", "dsads", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset.root"));
}

#[test]
fn same_seed_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train(&a, &["--mode", "fusion", "--seed", "4"]).status.success());
    assert!(train(&b, &["--mode", "fusion", "--seed", "4", "--jobs", "2"]).status.success());
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "report.json"), read(&b, "report.json"));
    assert_eq!(read(&a, "folds/B/fusion.ckpt"), read(&b, "folds/B/fusion.ckpt"));
}

#[test]
fn gradcheck_default_passes() {
    let o = adg(&["gradcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("grl dual beta=0.5"));
    assert!(out.contains("grl lambda=0 (abs)"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn report_lists_every_run_and_stored_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(train(&out, &["--mode", "fusion", "--mode", "single:I", "--mode", "baseline"]).status.success());
    let json = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report = adg_core::train::ExperimentReport::from_json(&json).unwrap();
    assert_eq!(report.to_json(), json);

    let text = stdout(&adg(&["report", out.to_str().unwrap()]));
    let runs = text.split("Runs (fold × mode)").nth(1).unwrap().split("Loss / held-out").next().unwrap();
    let rows = runs.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Fold")).count();
    assert_eq!(rows, 2 * 3);
    let corr = text.split("Loss / held-out").nth(1).unwrap();
    for p in &report.pearson {
        if let Some(r) = p.r {
            let cells = corr
                .lines()
                .map(|l| l.split('|').map(str::trim).collect::<Vec<_>>())
                .find(|c| c.len() > 3 && c[1] == p.scope && c[2] == p.component)
                .unwrap_or_else(|| panic!("missing {} {}", p.scope, p.component));
            assert_eq!(cells[3], format!("{r:.3}"));
        }
    }
}
