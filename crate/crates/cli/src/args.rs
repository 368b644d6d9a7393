//! Command-line definitions and `--config` merging.
//!
//! A config file is TOML. Top-level keys apply to whichever subcommand runs, and a
//! `[train]` (or `[sort]`, ...) table overrides them for that subcommand only. Keys are
//! flag names with `_` or `-`. Flags given on the command line beat the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use storyseq::data::SignalMode;
use storyseq::model::ModelKind;

use crate::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "storyseq",
    version,
    about = "Order jumbled story elements and evaluate the result"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic planted-signal dataset.
    Generate(GenerateArgs),
    /// Train a unary, pairwise or position-embedding model.
    Train(TrainArgs),
    /// Predict orders with one checkpoint, or a voting ensemble of several.
    Sort(SortArgs),
    /// Score predictions against gold orders.
    Eval(EvalArgs),
    /// Re-run a command from its manifest and verify the outputs match.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Sort(_) => "sort",
            Command::Eval(_) => "eval",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalArg {
    Monotone,
    None,
}

impl From<SignalArg> for SignalMode {
    fn from(s: SignalArg) -> Self {
        match s {
            SignalArg::Monotone => SignalMode::Monotone,
            SignalArg::None => SignalMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Unary,
    Pairwise,
    Npe,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Unary => ModelKind::Unary,
            ModelArg::Pairwise => ModelKind::Pairwise,
            ModelArg::Npe => ModelKind::Npe,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000, value_parser = positive_count)]
    pub stories: usize,
    /// Elements per story.
    #[arg(long, default_value_t = 5, value_parser = story_len)]
    pub n: usize,
    #[arg(long, default_value_t = 32, value_parser = positive_count)]
    pub text_dim: usize,
    #[arg(long, default_value_t = 16, value_parser = positive_count)]
    pub image_dim: usize,
    /// Per-coordinate Gaussian noise std.
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = SignalArg::Monotone)]
    pub signal: SignalArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `<out stem>.train/.val/.test.jsonl` with these fractions, e.g. `0.8,0.1,0.1`.
    #[arg(long, value_parser = fractions)]
    pub split: Option<(f64, f64, f64)>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional validation dataset, scored after training.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = positive_count)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = positive_count)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = non_negative)]
    pub l2: Option<f64>,
    #[arg(long, value_parser = positive_count)]
    pub hidden: Option<usize>,
    /// Append image features to text features.
    #[arg(long)]
    pub use_image: Option<bool>,
    /// Hinge margin (pairwise only).
    #[arg(long, value_parser = positive)]
    pub margin: Option<f64>,
    /// Order margin (npe only).
    #[arg(long, value_parser = positive)]
    pub alpha: Option<f64>,
    /// Embedding width (npe only).
    #[arg(long, value_parser = positive_count)]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SortArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model checkpoint; repeat for a voting ensemble.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions path.
    #[arg(long)]
    pub out: PathBuf,
    /// Permutations each ensemble member votes with.
    #[arg(long, default_value_t = storyseq::ensemble::DEFAULT_TOP_K, value_parser = positive_count)]
    pub topk: usize,
    /// Recorded in the manifest; sorting itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the report here (and a manifest next to it).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in the manifest; evaluation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn positive_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn story_len(s: &str) -> Result<usize, String> {
    let v = s.parse::<usize>().map_err(|e| e.to_string())?;
    if (storyseq::perm::MIN_N..=storyseq::perm::MAX_N).contains(&v) {
        Ok(v)
    } else {
        Err(format!(
            "must be in {}..={}",
            storyseq::perm::MIN_N,
            storyseq::perm::MAX_N
        ))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(_) => Err("must be finite and non-negative".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s.split(',').map(|p| non_negative(p.trim())).collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if (a + b + c - 1.0).abs() <= 1e-9 => Ok((a, b, c)),
        [_, _, _] => Err("fractions must sum to 1".into()),
        _ => Err("expected three comma-separated fractions".into()),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(_) => Err("must be finite and positive".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Splices `--config` values into `argv` ahead of the explicit flags. Also returns the
/// config path, if any.
pub fn expand_config(argv: Vec<String>) -> Result<(Vec<String>, Option<PathBuf>), Failure> {
    let Some(sub_at) = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok((argv, None));
    };
    let rest = &argv[sub_at + 1..];
    let mut path = None;
    let mut explicit = Vec::new();
    let mut k = 0;
    while k < rest.len() {
        let a = &rest[k];
        if a == "--config" {
            path = Some(
                rest.get(k + 1)
                    .ok_or_else(|| Failure::Usage("--config needs a path".into()))?
                    .clone(),
            );
            k += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            explicit.push(a.clone());
        }
        k += 1;
    }
    let Some(path) = path else {
        return Ok((argv, None));
    };
    let given: Vec<&str> = explicit
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let mut out = argv[..=sub_at].to_vec();
    for (flag, values) in config_flags(Path::new(&path), &argv[sub_at])? {
        if given.contains(&flag.as_str()) {
            continue;
        }
        for v in values {
            out.push(format!("--{flag}"));
            out.push(v);
        }
    }
    out.extend(explicit);
    Ok((out, Some(PathBuf::from(path))))
}

fn config_flags(path: &Path, subcommand: &str) -> Result<Vec<(String, Vec<String>)>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let mut flags: Vec<(String, Vec<String>)> = Vec::new();
    let section = table.get(subcommand).and_then(|v| v.as_table());
    let scoped = section.into_iter().flatten();
    for (key, value) in table.iter().filter(|(_, v)| !v.is_table()).chain(scoped) {
        let flag = key.replace('_', "-");
        if flag == "config" {
            return Err(Failure::Usage("config files cannot include other config files".into()));
        }
        let values = match value {
            toml::Value::Array(items) => items.iter().map(scalar).collect::<Result<_, _>>(),
            v => scalar(v).map(|s| vec![s]),
        }
        .map_err(|msg| Failure::Usage(format!("config key {key}: {msg}")))?;
        flags.retain(|(f, _)| *f != flag);
        flags.push((flag, values));
    }
    Ok(flags)
}

fn scalar(v: &toml::Value) -> Result<String, String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(format!("unsupported value {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn config_fills_missing_flags_and_explicit_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "seed = 3\nout = \"a.jsonl\"\n[generate]\nn = 4\nnoise = 0.25\n[train]\nn = 9\n",
        )
        .unwrap();
        let (expanded, config) = expand_config(argv(&format!(
            "storyseq generate --config {} --seed 11",
            path.display()
        )))
        .unwrap();
        assert_eq!(config.as_deref(), Some(path.as_path()));
        let cli = Cli::try_parse_from(&expanded).unwrap();
        let Command::Generate(g) = cli.command else { panic!() };
        assert_eq!((g.seed, g.n, g.noise), (11, 4, 0.25));
        assert_eq!(g.out, PathBuf::from("a.jsonl"));
    }

    #[test]
    fn config_arrays_become_repeated_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sort.toml");
        fs::write(
            &path,
            "checkpoint = [\"p.json\", \"n.json\"]\ndata = \"d\"\nout = \"o\"\n",
        )
        .unwrap();
        let (expanded, _) = expand_config(argv(&format!("storyseq sort --config={}", path.display()))).unwrap();
        let Command::Sort(s) = Cli::try_parse_from(&expanded).unwrap().command else {
            panic!()
        };
        assert_eq!(s.checkpoint, vec![PathBuf::from("p.json"), PathBuf::from("n.json")]);
        let (expanded, _) = expand_config(argv(&format!(
            "storyseq sort --config {} --checkpoint u.json",
            path.display()
        )))
        .unwrap();
        let Command::Sort(s) = Cli::try_parse_from(&expanded).unwrap().command else {
            panic!()
        };
        assert_eq!(s.checkpoint, vec![PathBuf::from("u.json")]);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "seed = [[1]]\n").unwrap();
        let r = expand_config(argv(&format!("storyseq generate --config {}", path.display())));
        assert!(matches!(r, Err(Failure::Usage(_))));
        assert!(matches!(
            expand_config(argv("storyseq generate --config")),
            Err(Failure::Usage(_))
        ));
        assert!(matches!(
            expand_config(argv("storyseq generate --config /nonexistent.toml")),
            Err(Failure::Usage(_))
        ));
    }

    #[test]
    fn boundary_values_are_rejected() {
        assert!(Cli::try_parse_from(argv("storyseq generate --n 1 --out x")).is_err());
        assert!(Cli::try_parse_from(argv("storyseq generate --noise -1 --out x")).is_err());
        assert!(Cli::try_parse_from(argv("storyseq train --model lstm --data d --out o")).is_err());
        assert!(Cli::try_parse_from(argv("storyseq sort --data d --out o")).is_err());
        assert!(Cli::try_parse_from(argv("storyseq generate --n 16 --out x")).is_ok());
        assert!(Cli::try_parse_from(argv("storyseq generate --split 0.5,0.5 --out x")).is_err());
        assert!(Cli::try_parse_from(argv("storyseq generate --split 0.5,0.4,0.2 --out x")).is_err());
        let Command::Generate(g) = Cli::try_parse_from(argv("storyseq generate --split 0.8,0.1,0.1 --out x"))
            .unwrap()
            .command
        else {
            panic!()
        };
        assert_eq!(g.split, Some((0.8, 0.1, 0.1)));
    }
}
