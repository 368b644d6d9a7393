//! Stories, dataset files, and the synthetic planted-signal generator.
//!
//! Dataset files hold one JSON story per line:
//!
//! ```text
//! {"story_id":"s1","n":3,"elements":[{"element_id":"a","gold_position":0,
//!   "text_features":[0.1,0.2],"image_features":null}, ...],"presented_order":[2,0,1]}
//! ```
//!
//! `presented_order[i]` is the slot at which element `i` is shown to a model. Models only
//! ever see features in slot order; predictions are mapped back to element order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, concat, Vector};
use crate::perm::Permutation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub element_id: String,
    pub gold_position: usize,
    pub text_features: Vector,
    pub image_features: Option<Vector>,
}

impl Element {
    /// Text features, optionally followed by image features.
    pub fn features(&self, use_image: bool) -> Result<Vector> {
        concat_features(self, use_image)
    }
}

pub fn concat_features(e: &Element, use_image: bool) -> Result<Vector> {
    if !use_image {
        return Ok(e.text_features.clone());
    }
    match &e.image_features {
        Some(img) => Ok(concat(&e.text_features, img)),
        None => Err(Error::Feature(format!(
            "element {} has no image features",
            e.element_id
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoryRecord", into = "StoryRecord")]
pub struct Story {
    story_id: String,
    elements: Vec<Element>,
    presented_order: Permutation,
}

#[derive(Serialize, Deserialize)]
struct StoryRecord {
    story_id: String,
    n: usize,
    elements: Vec<Element>,
    presented_order: Option<Vec<usize>>,
}

impl TryFrom<StoryRecord> for Story {
    type Error = Error;

    fn try_from(r: StoryRecord) -> Result<Self> {
        if r.n != r.elements.len() {
            return Err(Error::invalid(format!(
                "story {}: n = {} but {} elements",
                r.story_id,
                r.n,
                r.elements.len()
            )));
        }
        let presented = match r.presented_order {
            Some(p) => Permutation::new(p)
                .map_err(|e| Error::invalid(format!("story {}: presented_order: {e}", r.story_id)))?,
            None => Permutation::identity(r.n).map_err(|e| Error::invalid(format!("story {}: {e}", r.story_id)))?,
        };
        Story::new(r.story_id, r.elements, presented)
    }
}

impl From<Story> for StoryRecord {
    fn from(s: Story) -> Self {
        StoryRecord {
            n: s.elements.len(),
            story_id: s.story_id,
            elements: s.elements,
            presented_order: Some(s.presented_order.into()),
        }
    }
}

impl Story {
    pub fn new(story_id: String, elements: Vec<Element>, presented_order: Permutation) -> Result<Self> {
        let fail = |msg: String| Error::invalid(format!("story {story_id}: {msg}"));
        let gold: Vec<usize> = elements.iter().map(|e| e.gold_position).collect();
        Permutation::new(gold).map_err(|e| fail(format!("gold positions: {e}")))?;
        if presented_order.len() != elements.len() {
            return Err(fail(format!(
                "presented_order has {} entries for {} elements",
                presented_order.len(),
                elements.len()
            )));
        }
        let text_dim = elements[0].text_features.len();
        let image_dim = elements[0].image_features.as_ref().map(Vec::len);
        for e in &elements {
            if e.text_features.len() != text_dim || e.image_features.as_ref().map(Vec::len) != image_dim {
                return Err(fail(format!("element {} has inconsistent feature dims", e.element_id)));
            }
            if text_dim == 0 || image_dim == Some(0) {
                return Err(fail(format!("element {} has empty features", e.element_id)));
            }
            check_finite(&e.text_features, "text features").map_err(|err| fail(err.to_string()))?;
            if let Some(img) = &e.image_features {
                check_finite(img, "image features").map_err(|err| fail(err.to_string()))?;
            }
        }
        Ok(Self {
            story_id,
            elements,
            presented_order,
        })
    }

    pub fn story_id(&self) -> &str {
        &self.story_id
    }

    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn presented_order(&self) -> &Permutation {
        &self.presented_order
    }

    pub fn gold(&self) -> Permutation {
        Permutation::new(self.elements.iter().map(|e| e.gold_position).collect()).expect("validated on construction")
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            n: self.n(),
            text_dim: self.elements[0].text_features.len(),
            image_dim: self.elements[0].image_features.as_ref().map(Vec::len),
        }
    }

    /// Features in presentation-slot order.
    pub fn presented_features(&self, use_image: bool) -> Result<Vec<Vector>> {
        self.presented_order
            .inverse()
            .positions()
            .iter()
            .map(|&i| self.elements[i].features(use_image))
            .collect()
    }

    /// Features sorted by gold position (for training only).
    pub fn gold_ordered_features(&self, use_image: bool) -> Result<Vec<Vector>> {
        self.gold()
            .inverse()
            .positions()
            .iter()
            .map(|&i| self.elements[i].features(use_image))
            .collect()
    }

    /// Maps an ordering over presentation slots back to element order.
    pub fn slots_to_elements(&self, slot_order: &Permutation) -> Result<Permutation> {
        if slot_order.len() != self.n() {
            return Err(Error::dim(format!(
                "story {}: ordering of {} slots for {} elements",
                self.story_id,
                slot_order.len(),
                self.n()
            )));
        }
        slot_order.compose(&self.presented_order)
    }

    pub fn with_presented_order(mut self, presented_order: Permutation) -> Result<Self> {
        if presented_order.len() != self.n() {
            return Err(Error::dim("presented_order length"));
        }
        self.presented_order = presented_order;
        Ok(self)
    }
}

/// Shape shared by every story in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub n: usize,
    pub text_dim: usize,
    pub image_dim: Option<usize>,
}

impl FeatureDims {
    pub fn input_dim(&self, use_image: bool) -> Result<usize> {
        match (use_image, self.image_dim) {
            (false, _) => Ok(self.text_dim),
            (true, Some(d)) => Ok(self.text_dim + d),
            (true, None) => Err(Error::Feature("dataset has no image features".into())),
        }
    }
}

/// Dims of a non-empty dataset, checking every story agrees.
pub fn dataset_dims(stories: &[Story]) -> Result<FeatureDims> {
    let first = stories.first().ok_or(Error::EmptyInput("dataset has no stories"))?;
    let dims = first.dims();
    for s in stories {
        if s.dims() != dims {
            return Err(Error::dim(format!(
                "story {} has shape {:?}, dataset has {:?}",
                s.story_id,
                s.dims(),
                dims
            )));
        }
    }
    Ok(dims)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Story>> {
    read_jsonl(path)
}

pub fn save_dataset(path: impl AsRef<Path>, stories: &[Story]) -> Result<()> {
    write_jsonl(path, stories)
}

/// One predicted order; `predicted_order[i]` is the position given to element `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub story_id: String,
    pub predicted_order: Permutation,
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    read_jsonl(path)
}

pub fn save_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<()> {
    write_jsonl(path, predictions)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            if e.is_data() {
                // Invariant failures surface as data errors; keep them as validation errors.
                Error::Validation(format!("line {}: {e}", k + 1))
            } else {
                Error::Parse {
                    line: k + 1,
                    message: e.to_string(),
                }
            }
        })?;
        records.push(record);
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// A copy of `story` shown in a fresh uniformly random order.
pub fn jumble<R: Rng + ?Sized>(story: &Story, rng: &mut R) -> Story {
    let order = Permutation::random(story.n(), rng).expect("story length already validated");
    story.clone().with_presented_order(order).expect("same length")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// Position `g` is planted as `g * u` along a fixed unit direction `u`.
    Monotone,
    /// Features are pure noise.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub story_count: usize,
    pub n: usize,
    pub text_dim: usize,
    pub image_dim: usize,
    pub noise_sigma: f64,
    pub signal_mode: SignalMode,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            story_count: 1000,
            n: 5,
            text_dim: 32,
            image_dim: 16,
            noise_sigma: 0.1,
            signal_mode: SignalMode::Monotone,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        crate::perm::check_size(self.n)?;
        if self.story_count == 0 || self.text_dim == 0 || self.image_dim == 0 {
            return Err(Error::invalid("story_count, text_dim and image_dim must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v: Vector = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn planted<R: Rng + ?Sized>(direction: &[f64], position: usize, spec: &SyntheticSpec, rng: &mut R) -> Vector {
    let scale = match spec.signal_mode {
        SignalMode::Monotone => position as f64,
        SignalMode::None => 0.0,
    };
    direction
        .iter()
        .map(|&u| {
            let noise: f64 = rng.sample(StandardNormal);
            scale * u + spec.noise_sigma * noise
        })
        .collect()
}

/// Stories with position information planted linearly in both feature blocks, each
/// shown in a random order. Elements are stored in gold order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Story>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let text_dir = unit_direction(spec.text_dim, &mut rng);
    let image_dir = unit_direction(spec.image_dim, &mut rng);
    (0..spec.story_count)
        .map(|s| {
            let story_id = format!("syn-{s:06}");
            let elements = (0..spec.n)
                .map(|g| Element {
                    element_id: format!("{story_id}-{g}"),
                    gold_position: g,
                    text_features: planted(&text_dir, g, spec, &mut rng),
                    image_features: Some(planted(&image_dir, g, spec, &mut rng)),
                })
                .collect();
            let presented = Permutation::random(spec.n, &mut rng)?;
            Story::new(story_id, elements, presented)
        })
        .collect()
}

/// Seeded shuffle then contiguous train / validation / test split.
pub fn split_dataset(
    stories: &[Story],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Story>, Vec<Story>, Vec<Story>)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    let mut idx: Vec<usize> = (0..stories.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let total = stories.len() as f64;
    let n_train = (a * total).round() as usize;
    let n_val = ((b * total).round() as usize).min(stories.len() - n_train);
    let pick = |range: &[usize]| range.iter().map(|&i| stories[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_val]),
        pick(&idx[n_train + n_val..]),
    ))
}
