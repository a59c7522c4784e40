use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 4
[rollout]
horizon = 200
[train]
max_epochs = 2
triplets_per_epoch = 16
batch_size = 16
[evolution]
population = 8
generations = 2
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarm-discovery"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(["--config", "run.toml"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn filter_writes_csv_and_summary() {
    let dir = setup();
    let stdout = ok(dir.path(), &["--out", "f", "filter", "--limit", "500"]);
    assert!(stdout.starts_with("total 500 passed "), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("f/filter.csv")).unwrap();
    assert_eq!(csv.lines().count(), 501);
    assert!(csv.starts_with("controller,m1,m2,m3,m4,m5,score,passes"));
    // two-sensor enumeration needs a limit
    assert_eq!(run(dir.path(), &["filter", "--sensors", "two"]).status.code(), Some(1));
}

#[test]
fn simulate_and_embed() {
    let dir = setup();
    ok(dir.path(), &["--out", "s", "simulate", "--controller=0.6,1.0,0.4,0.5"]);
    for f in ["trajectory.csv", "image.pgm", "features.json"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    std::fs::write(dir.path().join("c.csv"), "0.6,1.0,0.4,0.5\n-0.7,0.3,1.0,1.0\n").unwrap();
    ok(dir.path(), &["--out", "e", "--mapping", "hand", "embed", "--input", "c.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("e/embed.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].split(',').count(), 6);
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(run(dir.path(), &["--mapping", "bogus", "filter", "--limit", "1"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["simulate", "--controller", "1,2"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["taxonomy", "--archive", "missing.jsonl"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn dataset_pretrain_finetune() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--out", "data", "dataset", "--count", "6"]);
    let a = std::fs::read(d.join("data/manifest.jsonl")).unwrap();
    ok(d, &["--out", "data2", "dataset", "--count", "6"]);
    assert_eq!(a, std::fs::read(d.join("data2/manifest.jsonl")).unwrap());

    ok(d, &["--out", "net", "pretrain", "--dataset", "data"]);
    assert!(d.join("net/embedding.swemb").exists());
    assert!(d.join("net/pretrain_log.csv").exists());

    // a label journal with two classes
    let ids: Vec<String> = String::from_utf8(a)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    {
        use swarm_discovery::hil::{ClassChoice, LabelStore};
        let mut store = LabelStore::open(&d.join("labels.jsonl")).unwrap();
        store.record(1, &ids[0], &ClassChoice::New("one".into()), "t").unwrap();
        store.record(2, &ids[1], &ClassChoice::Existing(1), "t").unwrap();
        store.record(3, &ids[2], &ClassChoice::New("two".into()), "t").unwrap();
    }
    let stdout = ok(
        d,
        &["--out", "ft", "finetune", "--dataset", "data", "--checkpoint", "net/embedding.swemb", "--labels", "labels.jsonl"],
    );
    assert!(stdout.contains("3 labeled images, 1 triplets"), "{stdout}");
    assert!(d.join("ft/finetuned.swemb").exists());

    let stdout = ok(d, &["--out", "acc", "--mapping", "net:net/embedding.swemb", "eval-accuracy", "--synthetic", "12", "--random-seeds", "2"]);
    assert!(stdout.contains("random initialization"), "{stdout}");
    assert!(d.join("acc/accuracy.json").exists());
}

#[test]
fn evolve_taxonomy_distinct() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--out", "run", "evolve"]);
    let archive = std::fs::read_to_string(d.join("run/archive.jsonl")).unwrap();
    assert_eq!(archive.lines().count(), 16);
    ok(d, &["--out", "tax", "taxonomy", "--archive", "run/archive.jsonl", "--k", "3"]);
    assert_eq!(std::fs::read_dir(d.join("tax/gallery")).unwrap().count(), 3);
    let stdout = ok(d, &["--out", "tax", "eval-distinct", "--taxonomy", "tax/taxonomy.json"]);
    assert!(stdout.contains("| distinct |"), "{stdout}");
    std::fs::write(d.join("names.json"), "{}").unwrap();
    assert_eq!(
        run(d, &["eval-distinct", "--taxonomy", "tax/taxonomy.json", "--labels", "names.json"]).status.code(),
        Some(1)
    );
}
