use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;
use storyseq::data::{
    dataset_dims, generate_synthetic, load_dataset, load_predictions, save_dataset, save_predictions, split_dataset,
    Prediction,
};
use storyseq::ensemble::{ensemble_sort, Ranker};
use storyseq::metrics::{aggregate, confusion, MetricReport, StoryMetrics};
use storyseq::npe::{train_npe, NpeConfig};
use storyseq::pairwise::{train_pairwise, PairwiseConfig};
use storyseq::unary::{train_unary, UnaryConfig};
use storyseq::{Model, Story, SyntheticSpec, TrainConfig};

use crate::args::{EvalArgs, GenerateArgs, ModelArg, SortArgs, TrainArgs};
use crate::manifest::FileRecord;
use crate::Failure;

/// What a finished command leaves behind for its manifest.
pub struct Run {
    pub args: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub metrics: Option<serde_json::Value>,
    /// Where the manifest goes; `None` when the command wrote no file.
    pub out: Option<PathBuf>,
}

fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

fn seeds(seed: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([("seed".to_string(), seed)])
}

fn load(role: &str, path: &Path) -> Result<Vec<Story>, Failure> {
    load_dataset(path)
        .with_context(|| format!("loading {role} dataset {}", path.display()))
        .map_err(Failure::from)
}

pub fn generate(a: &GenerateArgs) -> Result<Run, Failure> {
    let spec = SyntheticSpec {
        story_count: a.stories,
        n: a.n,
        text_dim: a.text_dim,
        image_dim: a.image_dim,
        noise_sigma: a.noise,
        signal_mode: a.signal.into(),
        seed: a.seed,
    };
    let stories = generate_synthetic(&spec)?;
    save_dataset(&a.out, &stories).with_context(|| format!("writing {}", a.out.display()))?;
    let mut outputs = vec![FileRecord::of("dataset", &a.out)?];
    let mut summary = json!({ "stories": stories.len(), "out": path_arg(&a.out) });
    if let Some(fractions) = a.split {
        let (train, val, test) = split_dataset(&stories, fractions, a.seed)?;
        for (role, part) in [("train", train), ("val", val), ("test", test)] {
            let path = a.out.with_extension(format!("{role}.jsonl"));
            save_dataset(&path, &part).with_context(|| format!("writing {}", path.display()))?;
            summary[role] = json!(part.len());
            outputs.push(FileRecord::of(role, &path)?);
        }
    }
    println!("{summary}");
    let signal = match a.signal {
        crate::args::SignalArg::Monotone => "monotone",
        crate::args::SignalArg::None => "none",
    };
    let mut args = vec![
        ("--stories", a.stories.to_string()),
        ("--n", a.n.to_string()),
        ("--text-dim", a.text_dim.to_string()),
        ("--image-dim", a.image_dim.to_string()),
        ("--noise", a.noise.to_string()),
        ("--signal", signal.to_string()),
        ("--seed", a.seed.to_string()),
        ("--out", path_arg(&a.out)),
    ];
    if let Some((t, v, e)) = a.split {
        args.push(("--split", format!("{t},{v},{e}")));
    }
    Ok(Run {
        args: flatten("generate", &args),
        seeds: seeds(a.seed),
        inputs: vec![],
        outputs,
        metrics: None,
        out: Some(a.out.clone()),
    })
}

fn flatten(command: &str, pairs: &[(&str, String)]) -> Vec<String> {
    let mut out = vec![command.to_string()];
    for (flag, value) in pairs {
        out.push(flag.to_string());
        out.push(value.clone());
    }
    out
}

enum Trainer {
    Unary(UnaryConfig),
    Pairwise(PairwiseConfig),
    Npe(NpeConfig),
}

impl Trainer {
    fn resolve(a: &TrainArgs) -> Result<Self, Failure> {
        let only = |flag: &str, set: bool, model: ModelArg, owner: ModelArg| {
            if set && model != owner {
                Err(Failure::Usage(format!(
                    "--{flag} only applies to --model {}",
                    owner_name(owner)
                )))
            } else {
                Ok(())
            }
        };
        only("margin", a.margin.is_some(), a.model, ModelArg::Pairwise)?;
        only("alpha", a.alpha.is_some(), a.model, ModelArg::Npe)?;
        only("embed-dim", a.embed_dim.is_some(), a.model, ModelArg::Npe)?;
        let train = |base: TrainConfig| TrainConfig {
            learning_rate: a.lr.unwrap_or(base.learning_rate),
            epochs: a.epochs.unwrap_or(base.epochs),
            batch_size: a.batch_size.unwrap_or(base.batch_size),
            seed: a.seed,
            l2: a.l2.unwrap_or(base.l2),
        };
        Ok(match a.model {
            ModelArg::Unary => {
                let d = UnaryConfig::default();
                Trainer::Unary(UnaryConfig {
                    train: train(d.train),
                    hidden: a.hidden.unwrap_or(d.hidden),
                    use_image: a.use_image.unwrap_or(d.use_image),
                })
            }
            ModelArg::Pairwise => {
                let d = PairwiseConfig::default();
                Trainer::Pairwise(PairwiseConfig {
                    train: train(d.train),
                    hidden: a.hidden.unwrap_or(d.hidden),
                    use_image: a.use_image.unwrap_or(d.use_image),
                    margin: a.margin.unwrap_or(d.margin),
                })
            }
            ModelArg::Npe => {
                let d = NpeConfig::default();
                Trainer::Npe(NpeConfig {
                    embed_dim: a.embed_dim.unwrap_or(d.embed_dim),
                    alpha: a.alpha.unwrap_or(d.alpha),
                    hidden: a.hidden.unwrap_or(d.hidden),
                    use_image: a.use_image.unwrap_or(d.use_image),
                    train: train(d.train),
                })
            }
        })
    }

    fn common(&self) -> (&TrainConfig, usize, bool) {
        match self {
            Trainer::Unary(c) => (&c.train, c.hidden, c.use_image),
            Trainer::Pairwise(c) => (&c.train, c.hidden, c.use_image),
            Trainer::Npe(c) => (&c.train, c.hidden, c.use_image),
        }
    }

    /// Hyperparameter flags with every default spelled out.
    fn flags(&self) -> Vec<(&'static str, String)> {
        let (t, hidden, use_image) = self.common();
        let mut flags = vec![
            ("--seed", t.seed.to_string()),
            ("--epochs", t.epochs.to_string()),
            ("--lr", t.learning_rate.to_string()),
            ("--batch-size", t.batch_size.to_string()),
            ("--l2", t.l2.to_string()),
            ("--hidden", hidden.to_string()),
            ("--use-image", use_image.to_string()),
        ];
        match self {
            Trainer::Unary(_) => {}
            Trainer::Pairwise(c) => flags.push(("--margin", c.margin.to_string())),
            Trainer::Npe(c) => {
                flags.push(("--alpha", c.alpha.to_string()));
                flags.push(("--embed-dim", c.embed_dim.to_string()));
            }
        }
        flags
    }

    fn train(&self, stories: &[Story]) -> storyseq::Result<Model> {
        Ok(match self {
            Trainer::Unary(c) => train_unary(stories, c)?.into(),
            Trainer::Pairwise(c) => train_pairwise(stories, c)?.into(),
            Trainer::Npe(c) => train_npe(stories, c)?.into(),
        })
    }
}

fn owner_name(m: ModelArg) -> &'static str {
    match m {
        ModelArg::Unary => "unary",
        ModelArg::Pairwise => "pairwise",
        ModelArg::Npe => "npe",
    }
}

fn evaluate(model: &Model, stories: &[Story]) -> storyseq::Result<MetricReport> {
    let per_story = stories
        .iter()
        .map(|s| StoryMetrics::evaluate(&model.predict(s)?, &s.gold()))
        .collect::<storyseq::Result<Vec<_>>>()?;
    aggregate(per_story)
}

pub fn train(a: &TrainArgs) -> Result<Run, Failure> {
    let trainer = Trainer::resolve(a)?;
    let stories = load("training", &a.data)?;
    if stories.is_empty() {
        return Err(anyhow!("training dataset {} is empty", a.data.display()).into());
    }
    let model = trainer.train(&stories).context("training failed")?;
    let train_report = evaluate(&model, &stories)?;
    let mut inputs = vec![FileRecord::of("train", &a.data)?];
    let val_report = match &a.val {
        Some(path) => {
            let val = load("validation", path)?;
            if val.is_empty() {
                return Err(anyhow!("validation dataset {} is empty", path.display()).into());
            }
            model
                .check_compatible(&dataset_dims(&val)?)
                .context("validation dataset")?;
            inputs.push(FileRecord::of("val", path)?);
            Some(evaluate(&model, &val)?)
        }
        None => None,
    };
    model
        .save(&a.out)
        .with_context(|| format!("writing checkpoint {}", a.out.display()))?;
    let val_line = val_report.map_or("null".to_string(), |r| r.to_json_line());
    println!(
        "{{\"model\":\"{}\",\"train\":{},\"val\":{}}}",
        model.kind().as_str(),
        train_report.to_json_line(),
        val_line
    );
    let mut args = vec![
        ("--model", owner_name(a.model).to_string()),
        ("--data", path_arg(&a.data)),
    ];
    if let Some(v) = &a.val {
        args.push(("--val", path_arg(v)));
    }
    args.push(("--out", path_arg(&a.out)));
    args.extend(trainer.flags());
    Ok(Run {
        args: flatten("train", &args),
        seeds: seeds(a.seed),
        inputs,
        outputs: vec![FileRecord::of("checkpoint", &a.out)?],
        metrics: Some(json!({ "train": train_report, "val": val_report })),
        out: Some(a.out.clone()),
    })
}

pub fn sort(a: &SortArgs) -> Result<Run, Failure> {
    let mut inputs = Vec::new();
    let mut models = Vec::new();
    for path in &a.checkpoint {
        models.push(Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?);
        inputs.push(FileRecord::of("checkpoint", path)?);
    }
    let stories = load("input", &a.data)?;
    inputs.push(FileRecord::of("data", &a.data)?);
    if !stories.is_empty() {
        let dims = dataset_dims(&stories)?;
        for (m, path) in models.iter().zip(&a.checkpoint) {
            m.check_compatible(&dims)
                .with_context(|| format!("checkpoint {}", path.display()))?;
        }
    }
    let members: Vec<&dyn Ranker> = models.iter().map(|m| m as &dyn Ranker).collect();
    let predictions = stories
        .iter()
        .map(|s| {
            let order = match models.as_slice() {
                [single] => single.predict(s),
                _ => ensemble_sort(&members, s, a.topk),
            }
            .with_context(|| format!("story {}", s.story_id()))?;
            Ok(Prediction {
                story_id: s.story_id().to_string(),
                predicted_order: order,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    save_predictions(&a.out, &predictions).with_context(|| format!("writing {}", a.out.display()))?;
    let mode = if models.len() == 1 { "single" } else { "ensemble" };
    println!(
        "{}",
        json!({ "stories": predictions.len(), "mode": mode, "members": models.len(), "topk": a.topk })
    );
    let mut args: Vec<(&str, String)> = a.checkpoint.iter().map(|p| ("--checkpoint", path_arg(p))).collect();
    args.extend([
        ("--data", path_arg(&a.data)),
        ("--out", path_arg(&a.out)),
        ("--topk", a.topk.to_string()),
        ("--seed", a.seed.to_string()),
    ]);
    Ok(Run {
        args: flatten("sort", &args),
        seeds: seeds(a.seed),
        inputs,
        outputs: vec![FileRecord::of("predictions", &a.out)?],
        metrics: None,
        out: Some(a.out.clone()),
    })
}

pub fn eval(a: &EvalArgs) -> Result<Run, Failure> {
    let predictions =
        load_predictions(&a.predictions).with_context(|| format!("loading predictions {}", a.predictions.display()))?;
    let stories = load("gold", &a.data)?;
    let mut by_id: HashMap<&str, &Story> = HashMap::new();
    for s in &stories {
        if by_id.insert(s.story_id(), s).is_some() {
            return Err(anyhow!("dataset repeats story id {}", s.story_id()).into());
        }
    }
    let missing: Vec<&str> = predictions
        .iter()
        .map(|p| p.story_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(anyhow!("predictions for story ids not in the dataset: {}", missing.join(", ")).into());
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(predictions.len());
    for p in &predictions {
        if !seen.insert(p.story_id.as_str()) {
            return Err(anyhow!("story id {} predicted more than once", p.story_id).into());
        }
        pairs.push((&p.predicted_order, by_id[p.story_id.as_str()].gold()));
    }
    let per_story = pairs
        .iter()
        .zip(&predictions)
        .map(|((pred, gold), p)| StoryMetrics::evaluate(pred, gold).with_context(|| format!("story {}", p.story_id)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = aggregate(per_story)?;
    let cm = confusion(pairs.iter().map(|(p, g)| (*p, g)))?;
    let text = format!(
        "{}\n{}\n",
        report.to_json_line(),
        json!({ "confusion": cm.counts, "stories": cm.stories })
    );
    print!("{text}");
    let mut args = vec![
        ("--predictions", path_arg(&a.predictions)),
        ("--data", path_arg(&a.data)),
    ];
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
        outputs.push(FileRecord::of("report", out)?);
        args.push(("--out", path_arg(out)));
    }
    args.push(("--seed", a.seed.to_string()));
    Ok(Run {
        args: flatten("eval", &args),
        seeds: seeds(a.seed),
        inputs: vec![
            FileRecord::of("predictions", &a.predictions)?,
            FileRecord::of("data", &a.data)?,
        ],
        outputs,
        metrics: Some(json!({ "report": report, "confusion": cm.counts })),
        out: a.out.clone(),
    })
}
