use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use storyseq::data::{generate_synthetic, jumble, split_dataset, SignalMode};
use storyseq::metrics::{aggregate, MetricReport, StoryMetrics};
use storyseq::pairwise::{train_pairwise, PairwiseConfig};
use storyseq::unary::{train_unary, UnaryConfig};
use storyseq::{Model, Story, SyntheticSpec};

fn held_out(spec: &SyntheticSpec) -> (Vec<Story>, Vec<Story>) {
    let all = generate_synthetic(spec).unwrap();
    let (train, _, test) = split_dataset(&all, (0.8, 0.0, 0.2), 99).unwrap();
    (train, test)
}

fn report(model: &Model, stories: &[Story]) -> MetricReport {
    aggregate(
        stories
            .iter()
            .map(|s| StoryMetrics::evaluate(&model.predict(s).unwrap(), &s.gold()).unwrap()),
    )
    .unwrap()
}

#[test]
fn noiseless_signal_is_sorted_perfectly() {
    let spec = SyntheticSpec {
        story_count: 600,
        noise_sigma: 0.0,
        seed: 21,
        ..Default::default()
    };
    let (train, test) = held_out(&spec);
    let model: Model = train_pairwise(&train, &PairwiseConfig::default()).unwrap().into();
    assert_eq!(report(&model, &test).pairwise_accuracy, 1.0);
}

#[test]
fn pure_noise_stays_at_chance() {
    let spec = SyntheticSpec {
        story_count: 2500,
        signal_mode: SignalMode::None,
        seed: 22,
        ..Default::default()
    };
    let (train, test) = held_out(&spec);
    let model: Model = train_pairwise(&train, &PairwiseConfig::default()).unwrap().into();
    let r = report(&model, &test);
    assert!(r.spearman.abs() <= 0.05, "{r:?}");
}

#[test]
fn predictions_do_not_depend_on_presentation() {
    let spec = SyntheticSpec {
        story_count: 400,
        seed: 23,
        ..Default::default()
    };
    let (train, test) = held_out(&spec);
    let model: Model = train_unary(&train, &UnaryConfig::default()).unwrap().into();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for s in test.iter().take(50) {
        let shuffled = jumble(s, &mut rng);
        assert_eq!(model.predict(&shuffled).unwrap(), model.predict(s).unwrap());
    }
}

#[test]
fn reloaded_checkpoint_predicts_identically() {
    let spec = SyntheticSpec {
        story_count: 200,
        seed: 24,
        ..Default::default()
    };
    let (train, test) = held_out(&spec);
    let mut cfg = PairwiseConfig::default();
    cfg.train.epochs = 2;
    let model: Model = train_pairwise(&train, &cfg).unwrap().into();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    for s in &test {
        assert_eq!(back.predict(s).unwrap(), model.predict(s).unwrap());
    }
}

#[test]
fn gold_oracle_is_perfect_on_jumbled_stories() {
    let stories = generate_synthetic(&SyntheticSpec {
        story_count: 100,
        seed: 25,
        ..Default::default()
    })
    .unwrap();
    let r = aggregate(
        stories
            .iter()
            .map(|s| StoryMetrics::evaluate(&s.gold(), &s.gold()).unwrap()),
    )
    .unwrap();
    assert_eq!((r.spearman, r.pairwise_accuracy, r.avg_distance), (1.0, 1.0, 0.0));
}
