use fop_core::dataio::{read_bank, write_bank, Split, Stratify, Subset};
use fop_core::evalsuite::{feature_analytics, score_trials, verify, ProjectionScorer};
use fop_core::fopmodel::{read_checkpoint, write_checkpoint, FopParams};
use fop_core::synthgen::{generate, SynthConfig};
use fop_core::trainer::{train, TrainConfig};
use fop_core::Rng;

fn config() -> TrainConfig {
    TrainConfig {
        embed_dim: 64,
        epochs: 8,
        ..Default::default()
    }
}

#[test]
fn training_leaves_embedding_banks_untouched() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("faces.bank");
    write_bank(&corpus.faces, &path).unwrap();
    let before = (corpus.faces.to_text(), corpus.voices.to_text());
    let faces = read_bank(&path).unwrap();
    train::<f64>(&faces, &corpus.voices, &corpus.labels, &config()).unwrap();
    assert_eq!((faces.to_text(), corpus.voices.to_text()), before);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), before.0);
}

#[test]
fn cross_entropy_falls_below_uniform_level() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let out = train::<f64>(&corpus.faces, &corpus.voices, &corpus.labels, &config()).unwrap();
    let uniform = (out.classes.len() as f64).ln();
    assert_eq!(out.classes.len(), 64);
    assert!((out.history[0].ce_term - uniform).abs() < 0.1, "first epoch {}", out.history[0].ce_term);
    let last = out.history.last().unwrap().ce_term;
    assert!(last < uniform - 0.05, "final {last} vs {uniform}");
}

#[test]
fn unseen_identities_never_train() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let out = train::<f64>(&corpus.faces, &corpus.voices, &corpus.labels, &TrainConfig { epochs: 1, ..config() }).unwrap();
    for class in &out.classes {
        assert_eq!(corpus.labels.split_of(class), Some(Split::Train), "{class}");
    }
}

#[test]
fn reloaded_checkpoint_scores_identically() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let out = train::<f64>(&corpus.faces, &corpus.voices, &corpus.labels, &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    write_checkpoint(&out.params, &path).unwrap();
    let back: FopParams<f64> = read_checkpoint(&path).unwrap();
    assert_eq!(back, out.params);

    let run = |p: &FopParams<f64>| {
        let s = ProjectionScorer::new(p, &corpus.faces, &corpus.voices).unwrap();
        verify(&s, &corpus.faces, &corpus.voices, &corpus.labels, Subset::TestUnseen, Stratify::None, 3, &mut Rng::new(8)).unwrap()
    };
    let (a, b) = (run(&out.params), run(&back));
    assert_eq!((a.eer, a.auc, a.n_pos, a.n_neg), (b.eer, b.auc, b.n_pos, b.n_neg));
    assert!(a.auc > 0.8, "auc {}", a.auc);

    let s = ProjectionScorer::new(&back, &corpus.faces, &corpus.voices).unwrap();
    let rescored = score_trials(&s, &corpus.faces, &corpus.voices, &a.trials).unwrap();
    assert_eq!(rescored, a.trials);
}

#[test]
fn trained_model_separates_identities_better_than_init() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let cfg = config();
    let stats = |p: &FopParams<f64>| {
        feature_analytics(p, &corpus.faces, &corpus.voices, &corpus.labels, Subset::TestUnseen, 50_000, &mut Rng::new(1)).unwrap()
    };
    let zero_epochs = train::<f64>(&corpus.faces, &corpus.voices, &corpus.labels, &TrainConfig { epochs: 0, ..cfg.clone() }).unwrap();
    let trained = train::<f64>(&corpus.faces, &corpus.voices, &corpus.labels, &cfg).unwrap();
    let (init, done) = (stats(&zero_epochs.params), stats(&trained.params));
    assert!(done.same_sim - done.diff_sim > init.same_sim - init.diff_sim);
}
