use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use andikit::trajgen::{read_dataset, Mechanism};

fn andikit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_andikit"))
        .current_dir(dir)
        .env_remove("ANDIKIT_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Small enough to train in seconds.
const TINY: &[&str] = &[
    "model.input_len=50",
    "model.scale=0.0625",
    "training.max_epochs=2",
    "training.batch_size=16",
    "training.learning_rate=0.003",
];

fn with(base: &[&str], extra: &[String]) -> Vec<String> {
    base.iter().map(|s| s.to_string()).chain(extra.iter().cloned()).collect()
}

fn run(dir: &Path, cmd: &str, out: &str, overrides: &[String]) -> PathBuf {
    let mut args = vec![cmd.to_string(), "--out".into(), out.to_string()];
    args.extend(overrides.iter().cloned());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&andikit(dir, &refs));
    dir.join(out)
}

fn generate(dir: &Path, out: &str, seed: u64, per_class: usize, length: usize) -> PathBuf {
    run(
        dir,
        "generate",
        out,
        &[
            format!("seed={seed}"),
            format!("dataset.per_class={per_class}"),
            format!("dataset.length={length}"),
        ],
    )
    .join("dataset.txt")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_writes_eighty_records_with_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = generate(tmp.path(), "gen", 1, 10, 50);
    let d = read_dataset(fs::read(&ds).unwrap().as_slice()).unwrap();
    assert_eq!(d.len(), 80);
    assert_eq!(d.count_per_class(), [10; 8]);
    let run = tmp.path().join("gen");
    let resolved = fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("per_class = 10"), "{resolved}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run.join("generate.json")).unwrap()).unwrap();
    assert_eq!(report["records"], 80);
    assert!(run.join("inputs.json").exists());
}

#[test]
fn seed_env_and_overrides_take_precedence_over_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "seed = 1\n[dataset]\nper_class = 2\nlength = 30\n").unwrap();
    let gen = |out: &str, env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_andikit"));
        c.current_dir(tmp.path()).env_remove("ANDIKIT_SEED");
        if let Some(s) = env {
            c.env("ANDIKIT_SEED", s);
        }
        ok(&c.args(["generate", "-c", "c.toml", "-o", out]).args(extra).output().unwrap());
        fs::read(tmp.path().join(out).join("dataset.txt")).unwrap()
    };
    let file_seed = gen("a", None, &[]);
    let env_seed = gen("b", Some("5"), &[]);
    let cli_seed = gen("c", Some("7"), &["seed=5"]);
    assert_ne!(file_seed, env_seed);
    assert_eq!(env_seed, cli_seed);
    let resolved = fs::read_to_string(tmp.path().join("b/config.resolved.toml")).unwrap();
    assert!(resolved.starts_with("seed = 5"), "{resolved}");
}

#[test]
fn evaluate_oracle_predictions_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let ds_path = generate(tmp.path(), "gen", 2, 3, 40);
    let d = read_dataset(fs::read(&ds_path).unwrap().as_slice()).unwrap();
    let mut csv = format!("trajectory_id,{}\n", Mechanism::ALL.map(|m| m.name()).join(","));
    for (i, t) in d.iter().enumerate() {
        let row: Vec<&str> = (0..8).map(|c| if c == t.label.index() { "1" } else { "0" }).collect();
        csv.push_str(&format!("{i},{}\n", row.join(",")));
    }
    fs::write(tmp.path().join("oracle.csv"), csv).unwrap();
    let run_dir = run(
        tmp.path(),
        "evaluate",
        "eval",
        &["inputs.dataset=gen/dataset.txt".into(), "inputs.predictions=oracle.csv".into()],
    );
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run_dir.join("evaluate.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    let s1 = fs::read_to_string(run_dir.join("figS1_confusion.csv")).unwrap();
    assert_eq!(s1.lines().count(), 9);
    let s2 = fs::read_to_string(run_dir.join("figS2_confidence.csv")).unwrap();
    assert_eq!(s2.lines().count(), 1 + 8 * 10);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "gen", 3, 1, 30);
    fs::write(dir.join("broken.txt"), "not a dataset\n").unwrap();
    fs::write(dir.join("bad.toml"), "seed = [\n").unwrap();

    let unknown = code(&andikit(dir, &["plot"]));
    let config = code(&andikit(dir, &["generate", "-c", "bad.toml"]));
    let unknown_key = code(&andikit(dir, &["generate", "colour=red"]));
    let missing = code(&andikit(dir, &["evaluate", "inputs.dataset=nope.txt", "inputs.predictions=nope.csv"]));
    let unset = code(&andikit(dir, &["train"]));
    let malformed = code(&andikit(dir, &["gradcam", "inputs.dataset=broken.txt", "inputs.checkpoint=broken.txt"]));
    let pipeline = code(&andikit(dir, &["generate", "dataset.noise=-1"]));

    assert_eq!(unknown, 2);
    assert_eq!(config, 3);
    assert_eq!(unknown_key, 3);
    assert_eq!(missing, 4);
    assert_eq!(unset, 4);
    assert_eq!(malformed, 5);
    assert_eq!(pipeline, 3);
    assert!(!dir.join("runs").exists(), "failed runs wrote nothing");
}

#[test]
fn erasure_needs_a_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "gen", 4, 2, 50);
    let ck = andikit::network::Checkpoint {
        model: andikit::network::Model::new(andikit::network::ModelConfig::scaled(50, 0.0625), 0).unwrap(),
        meta: None,
    };
    fs::write(dir.join("fresh.ckpt"), ck.to_bytes().unwrap()).unwrap();
    let out = andikit(
        dir,
        &["erase-eval", "-o", "erase", "inputs.dataset=gen/dataset.txt", "inputs.checkpoint=fresh.ckpt"],
    );
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not been trained"));
}

#[test]
fn outputs_never_overwrite_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let ds = generate(dir, "gen", 5, 2, 40);
    let before = fs::read(&ds).unwrap();
    let d = read_dataset(before.as_slice()).unwrap();
    let mut csv = format!("trajectory_id,{}\n", Mechanism::ALL.map(|m| m.name()).join(","));
    for i in 0..d.len() {
        csv.push_str(&format!("{i},1,0,0,0,0,0,0,0\n"));
    }
    fs::write(dir.join("gen/evaluate.json"), "{}").unwrap();
    fs::write(dir.join("p.csv"), csv).unwrap();
    // writing next to an input is fine
    ok(&andikit(
        dir,
        &["evaluate", "-o", "gen", "inputs.dataset=gen/dataset.txt", "inputs.predictions=p.csv"],
    ));
    assert_eq!(fs::read(&ds).unwrap(), before);
    // but an output name that resolves to an input is refused
    fs::copy(dir.join("p.csv"), dir.join("gen/inputs.json")).unwrap();
    let out = andikit(
        dir,
        &["evaluate", "-o", "gen", "inputs.dataset=gen/dataset.txt", "inputs.predictions=gen/inputs.json"],
    );
    assert_eq!(code(&out), 7);
}

#[test]
fn full_pipeline_is_deterministic_and_emits_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "train_set", 10, 8, 50);
    generate(dir, "val_set", 11, 4, 50);
    generate(dir, "test_set", 12, 4, 50);
    let data = [
        "inputs.train=train_set/dataset.txt".to_string(),
        "inputs.val=val_set/dataset.txt".into(),
        "inputs.dataset=test_set/dataset.txt".into(),
    ];

    let pipeline = |tag: &str| -> Vec<PathBuf> {
        let d = |name: &str| format!("{tag}_{name}");
        let base = with(TINY, &data);
        let train = run(dir, "train", &d("train"), &base);
        let ck = format!("inputs.checkpoint={}", train.join("model.ckpt").display());
        let with_ck = with(TINY, &[data.to_vec(), vec![ck.clone()]].concat());
        let eval = run(dir, "evaluate", &d("eval"), &with_ck);
        let cam = run(dir, "gradcam", &d("gradcam"), &with_ck);
        let erase = run(dir, "erase-eval", &d("erase"), &with(&with_ck.iter().map(String::as_str).collect::<Vec<_>>(), &["erasure.seeds=[1, 2]".into()]));
        let stats = run(dir, "stats-corr", &d("stats"), &with_ck);
        let probe = run(dir, "probe-rf", &d("probe"), &with(TINY, &[]));
        let export = run(dir, "export-activations", &d("export"), &with(&with_ck.iter().map(String::as_str).collect::<Vec<_>>(), &["export.block=2".into()]));
        let aug_t = run(dir, "augment-train", &d("aug_t"), &with(&with_ck.iter().map(String::as_str).collect::<Vec<_>>(), &["augment.replicates=2".into()]));
        let aug_r = run(dir, "augment-train", &d("aug_r"), &with(&base.iter().map(String::as_str).collect::<Vec<_>>(), &["augment.replicates=2".into(), "augment.mode=random".into()]));
        let ckpts = |p: &Path| format!("[\"{}\", \"{}\"]", p.join("replicate_0.ckpt").display(), p.join("replicate_1.ckpt").display());
        let noise = run(
            dir,
            "noise-eval",
            &d("noise"),
            &with(
                TINY,
                &[
                    format!("inputs.targeted={}", ckpts(&aug_t)),
                    format!("inputs.random={}", ckpts(&aug_r)),
                    "noise.per_class=3".into(),
                    "noise.length=50".into(),
                    "noise.grid=[0.0, 0.5, 1.0]".into(),
                ],
            ),
        );
        vec![train, eval, cam, erase, stats, probe, export, aug_t, aug_r, noise]
    };

    let first = pipeline("a");
    let second = pipeline("b");
    for (a, b) in first.iter().zip(&second) {
        let fa: Vec<_> = files(a).into_iter().filter(|f| f.0 != "config.resolved.toml" && f.0 != "inputs.json").collect();
        let fb: Vec<_> = files(b).into_iter().filter(|f| f.0 != "config.resolved.toml" && f.0 != "inputs.json").collect();
        assert!(!fa.is_empty());
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(x.0, y.0);
            assert!(x.1 == y.1, "{} differs between identical runs", x.0);
        }
    }

    let read = |p: &Path| fs::read_to_string(p).unwrap();
    let fig3 = read(&first[3].join("fig3_erasure.csv"));
    let rows: Vec<&str> = fig3.lines().skip(1).collect();
    assert_eq!(rows.len(), 11);
    assert!(rows[10].starts_with("random,"));
    let fig7 = read(&first[4].join("fig7_correlation.csv"));
    assert_eq!(fig7.lines().count(), 9);
    assert!(fig7.lines().all(|l| l.split(',').count() == 5));
    let fig5 = read(&first[9].join("fig5_noise.csv"));
    assert_eq!(fig5.lines().next().unwrap(), "noise,targeted_mean,targeted_std_error,random_mean,random_std_error,gap");
    assert_eq!(fig5.lines().count(), 4);
    let acts = read(&first[6].join("activations.csv"));
    assert_eq!(acts.lines().count(), 1 + 32);
    assert!(first[7].join("replicate_1.ckpt").exists());
    let probe: serde_json::Value = serde_json::from_str(&read(&first[5].join("probe-rf.json"))).unwrap();
    assert_eq!(probe["nodes"], 2);
    let inputs: serde_json::Value = serde_json::from_str(&read(&first[1].join("inputs.json"))).unwrap();
    assert_eq!(inputs["dataset"]["sha256"].as_str().unwrap().len(), 64);
}
