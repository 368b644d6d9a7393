use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use storyseq::data::{load_dataset, load_predictions, save_predictions, Prediction};
use storyseq::Permutation;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyseq"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn generate_writes_requested_stories() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &[
            "generate",
            "--stories",
            "1000",
            "--n",
            "5",
            "--noise",
            "0.1",
            "--seed",
            "7",
            "--out",
            "d.jsonl",
        ],
    );
    let text = fs::read_to_string(tmp.path().join("d.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1000);
    assert!(tmp.path().join("d.jsonl.manifest.json").exists());
    ok(
        tmp.path(),
        &["generate", "--stories", "1000", "--seed", "7", "--out", "e.jsonl"],
    );
    assert_eq!(fs::read(tmp.path().join("e.jsonl")).unwrap(), text.as_bytes());
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&run(dir, &["generate", "--n", "1", "--out", "x"])), 2);
    assert_eq!(code(&run(dir, &["generate", "--stories", "0", "--out", "x"])), 2);
    assert_eq!(
        code(&run(dir, &["train", "--model", "lstm", "--data", "d", "--out", "o"])),
        2
    );
    assert_eq!(
        code(&run(
            dir,
            &["train", "--model", "npe", "--margin", "1", "--data", "d", "--out", "o"]
        )),
        2
    );
    assert_eq!(code(&run(dir, &["frobnicate"])), 2);
    assert_eq!(code(&run(dir, &["--help"])), 0);
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let missing = run(
        dir,
        &["train", "--model", "unary", "--data", "nope.jsonl", "--out", "o.json"],
    );
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.jsonl"));
    ok(
        dir,
        &[
            "generate",
            "--stories",
            "40",
            "--n",
            "4",
            "--seed",
            "1",
            "--out",
            "four.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "generate",
            "--stories",
            "40",
            "--n",
            "5",
            "--text-dim",
            "8",
            "--seed",
            "1",
            "--out",
            "five.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "train",
            "--model",
            "unary",
            "--data",
            "four.jsonl",
            "--epochs",
            "1",
            "--out",
            "u.json",
        ],
    );
    let mismatch = run(
        dir,
        &[
            "sort",
            "--checkpoint",
            "u.json",
            "--data",
            "five.jsonl",
            "--out",
            "p.jsonl",
        ],
    );
    assert_eq!(code(&mismatch), 1);
    let mismatch = run(
        dir,
        &[
            "train",
            "--model",
            "unary",
            "--data",
            "four.jsonl",
            "--val",
            "five.jsonl",
            "--out",
            "v.json",
        ],
    );
    assert_eq!(code(&mismatch), 1);
}

#[test]
fn train_sort_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &["generate", "--stories", "300", "--seed", "2", "--out", "train.jsonl"],
    );
    ok(
        dir,
        &["generate", "--stories", "60", "--seed", "3", "--out", "val.jsonl"],
    );
    let line = ok(
        dir,
        &[
            "train",
            "--model",
            "unary",
            "--data",
            "train.jsonl",
            "--val",
            "val.jsonl",
            "--out",
            "u.json",
        ],
    );
    let v = &json_lines(&line)[0];
    assert_eq!(v["model"], "unary");
    assert_eq!(v["val"]["story_count"], 60);

    let summary = ok(
        dir,
        &[
            "sort",
            "--checkpoint",
            "u.json",
            "--data",
            "val.jsonl",
            "--out",
            "pred.jsonl",
        ],
    );
    assert_eq!(json_lines(&summary)[0]["mode"], "single");
    let preds = load_predictions(dir.join("pred.jsonl")).unwrap();
    let stories = load_dataset(dir.join("val.jsonl")).unwrap();
    assert_eq!(preds.len(), stories.len());
    for (p, s) in preds.iter().zip(&stories) {
        assert_eq!(p.story_id, s.story_id());
        assert_eq!(p.predicted_order.len(), s.n());
    }

    let report = json_lines(&ok(
        dir,
        &["eval", "--predictions", "pred.jsonl", "--data", "val.jsonl"],
    ));
    assert_eq!(report[0]["story_count"], 60);
    let rows = report[1]["confusion"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(
            row.as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(),
            60
        );
    }
}

#[test]
fn ensemble_sort_uses_every_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &["generate", "--stories", "200", "--seed", "4", "--out", "d.jsonl"],
    );
    ok(
        dir,
        &[
            "train", "--model", "pairwise", "--data", "d.jsonl", "--epochs", "2", "--out", "p.json",
        ],
    );
    ok(
        dir,
        &[
            "train", "--model", "npe", "--data", "d.jsonl", "--epochs", "2", "--out", "n.json",
        ],
    );
    let summary = json_lines(&ok(
        dir,
        &[
            "sort",
            "--checkpoint",
            "p.json",
            "--checkpoint",
            "n.json",
            "--data",
            "d.jsonl",
            "--topk",
            "3",
            "--out",
            "e.jsonl",
        ],
    ));
    assert_eq!(summary[0]["mode"], "ensemble");
    assert_eq!(summary[0]["members"], 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("e.jsonl.manifest.json")).unwrap()).unwrap();
    let roles: Vec<_> = manifest["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["role"].clone())
        .collect();
    assert_eq!(roles, vec!["checkpoint", "checkpoint", "data"]);
}

fn write_gold_predictions(dir: &Path, data: &str, out: &str) {
    let stories = load_dataset(dir.join(data)).unwrap();
    let preds: Vec<Prediction> = stories
        .iter()
        .map(|s| Prediction {
            story_id: s.story_id().into(),
            predicted_order: s.gold(),
        })
        .collect();
    save_predictions(dir.join(out), &preds).unwrap();
}

#[test]
fn eval_of_gold_is_perfect_and_diagonal() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "generate",
            "--stories",
            "50",
            "--n",
            "6",
            "--seed",
            "5",
            "--out",
            "d.jsonl",
        ],
    );
    write_gold_predictions(dir, "d.jsonl", "gold.jsonl");
    let text = ok(dir, &["eval", "--predictions", "gold.jsonl", "--data", "d.jsonl"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        r#"{"spearman":1.000000,"pairwise_accuracy":1.000000,"avg_distance":0.000000,"story_count":50}"#
    );
    let cm = &json_lines(&text)[1]["confusion"];
    for g in 0..6 {
        for p in 0..6 {
            assert_eq!(cm[g][p], if g == p { 50 } else { 0 });
        }
    }
}

#[test]
fn eval_of_random_orders_is_near_chance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "generate",
            "--stories",
            "10000",
            "--text-dim",
            "2",
            "--image-dim",
            "1",
            "--seed",
            "6",
            "--out",
            "d.jsonl",
        ],
    );
    let stories = load_dataset(dir.join("d.jsonl")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let preds: Vec<Prediction> = stories
        .iter()
        .map(|s| Prediction {
            story_id: s.story_id().into(),
            predicted_order: Permutation::random(5, &mut rng).unwrap(),
        })
        .collect();
    save_predictions(dir.join("rand.jsonl"), &preds).unwrap();
    let r = &json_lines(&ok(dir, &["eval", "--predictions", "rand.jsonl", "--data", "d.jsonl"]))[0];
    assert!(r["spearman"].as_f64().unwrap().abs() < 0.03, "{r}");
    assert!((r["pairwise_accuracy"].as_f64().unwrap() - 0.5).abs() < 0.015, "{r}");
    assert!((r["avg_distance"].as_f64().unwrap() - 1.6).abs() < 0.05, "{r}");
}

#[test]
fn eval_names_unknown_story_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--stories", "5", "--seed", "5", "--out", "d.jsonl"]);
    let stray = Prediction {
        story_id: "ghost-42".into(),
        predicted_order: Permutation::identity(5).unwrap(),
    };
    save_predictions(dir.join("p.jsonl"), &[stray]).unwrap();
    let out = run(dir, &["eval", "--predictions", "p.jsonl", "--data", "d.jsonl"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost-42"));
}

#[test]
fn config_file_supplies_flags_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("exp.toml"),
        "seed = 9\n[generate]\nstories = 12\nn = 3\nout = \"cfg.jsonl\"\n",
    )
    .unwrap();
    ok(dir, &["generate", "--config", "exp.toml", "--stories", "20"]);
    let stories = load_dataset(dir.join("cfg.jsonl")).unwrap();
    assert_eq!((stories.len(), stories[0].n()), (20, 3));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("cfg.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["seed"], 9);
    assert_eq!(manifest["config"]["path"], "exp.toml");
    let args: Vec<String> = serde_json::from_value(manifest["args"].clone()).unwrap();
    assert!(!args.iter().any(|a| a == "--config"));
    ok(
        dir,
        &[
            "generate",
            "--stories",
            "20",
            "--n",
            "3",
            "--seed",
            "9",
            "--out",
            "flags.jsonl",
        ],
    );
    assert_eq!(
        fs::read(dir.join("cfg.jsonl")).unwrap(),
        fs::read(dir.join("flags.jsonl")).unwrap()
    );
}

#[test]
fn replay_detects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--stories", "30", "--seed", "1", "--out", "d.jsonl"]);
    ok(
        dir,
        &[
            "train", "--model", "unary", "--data", "d.jsonl", "--epochs", "1", "--out", "u.json",
        ],
    );
    let replayed = json_lines(&ok(
        dir,
        &["replay", "--manifest", "u.json.manifest.json", "--out", "u2.json"],
    ));
    assert_eq!(replayed.last().unwrap()["outputs"][0]["matches"], true);
    ok(dir, &["generate", "--stories", "30", "--seed", "2", "--out", "d.jsonl"]);
    let out = run(
        dir,
        &["replay", "--manifest", "u.json.manifest.json", "--out", "u3.json"],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn generate_can_split_one_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let summary = json_lines(&ok(
        dir,
        &[
            "generate",
            "--stories",
            "100",
            "--split",
            "0.8,0.1,0.1",
            "--out",
            "d.jsonl",
        ],
    ));
    assert_eq!(
        (
            summary[0]["train"].as_u64(),
            summary[0]["val"].as_u64(),
            summary[0]["test"].as_u64()
        ),
        (Some(80), Some(10), Some(10))
    );
    let mut ids: Vec<String> = ["d.train.jsonl", "d.val.jsonl", "d.test.jsonl"]
        .iter()
        .flat_map(|f| load_dataset(dir.join(f)).unwrap())
        .map(|s| s.story_id().to_string())
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 100);
    let replayed = json_lines(&ok(dir, &["replay", "--manifest", "d.jsonl.manifest.json"]));
    assert!(replayed.last().unwrap()["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|o| o["matches"] == true));
}
