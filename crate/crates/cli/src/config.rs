//! `key = value` run configuration covering corpus generation, training,
//! evaluation and file locations.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use fop_core::dataio::{Stratify, Subset};
use fop_core::evalsuite::MatchDirection;
use fop_core::fopmodel::Fusion;
use fop_core::losses::{LossKind, OcReduction};
use fop_core::synthgen::SynthConfig;
use fop_core::trainer::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval_subset: Subset,
    pub neg_per_pos: usize,
    pub stratify: Vec<Stratify>,
    pub match_nc: Vec<usize>,
    pub match_trials: usize,
    pub match_direction: MatchDirection,
    pub analytics_max_pairs: usize,
    pub bench_losses: Vec<LossKind>,
    pub bench_reps: usize,
    pub gradcheck_seeds: u64,
    pub faces: String,
    pub voices: String,
    pub labels: String,
    pub splits: String,
    pub checkpoint: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            eval_subset: Subset::TestUnseen,
            neg_per_pos: 1,
            stratify: vec![Stratify::None],
            match_nc: vec![2, 4, 6, 8, 10],
            match_trials: 10_000,
            match_direction: MatchDirection::VoiceToFace,
            analytics_max_pairs: 200_000,
            bench_losses: LossKind::ALL.to_vec(),
            bench_reps: 5,
            gradcheck_seeds: 20,
            faces: "faces.bank".into(),
            voices: "voices.bank".into(),
            labels: "labels.txt".into(),
            splits: "splits.txt".into(),
            checkpoint: "model.ckpt".into(),
        }
    }
}

fn subset_token(s: Subset) -> &'static str {
    match s {
        Subset::Train => "train",
        Subset::Val => "val",
        Subset::TestSeen => "test_seen",
        Subset::TestUnseen => "test_unseen",
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| parse_one(key, s.trim())).collect()
}

fn parse_words(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl RunConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let t = &self.train;
        let l = &t.loss;
        vec![
            ("synth_seed", s.seed.to_string()),
            ("n_identities", s.n_identities.to_string()),
            ("samples_per_identity", s.samples_per_identity.to_string()),
            ("latent_dim", s.latent_dim.to_string()),
            ("face_dim", s.face_dim.to_string()),
            ("voice_dim", s.voice_dim.to_string()),
            ("face_noise", s.face_noise.to_string()),
            ("voice_noise", s.voice_noise.to_string()),
            ("val_frac", s.val_frac.to_string()),
            ("test_seen_frac", s.test_seen_frac.to_string()),
            ("test_unseen_frac", s.test_unseen_frac.to_string()),
            ("genders", s.genders.join(",")),
            ("nationalities", s.nationalities.join(",")),
            ("age_buckets", s.age_buckets.join(",")),
            ("seed", t.seed.to_string()),
            ("embed_dim", t.embed_dim.to_string()),
            ("att_hidden", join(&t.att_hidden)),
            ("fusion", t.fusion.to_string()),
            ("loss", l.kind.to_string()),
            ("alpha", l.alpha.to_string()),
            ("oc_reduction", l.oc_reduction.to_string()),
            ("contrastive_margin", l.contrastive_margin.to_string()),
            ("triplet_margin", l.triplet_margin.to_string()),
            ("lambda_c", l.lambda_c.to_string()),
            ("lambda_g", l.lambda_g.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("lr", t.lr.to_string()),
            ("lr_decay", t.lr_decay.to_string()),
            ("adam_beta1", t.adam.beta1.to_string()),
            ("adam_beta2", t.adam.beta2.to_string()),
            ("adam_eps", t.adam.eps.to_string()),
            ("val_neg_per_pos", t.val_neg_per_pos.to_string()),
            ("eval_subset", subset_token(self.eval_subset).to_string()),
            ("neg_per_pos", self.neg_per_pos.to_string()),
            ("stratify", join(&self.stratify)),
            ("match_nc", join(&self.match_nc)),
            ("match_trials", self.match_trials.to_string()),
            ("match_direction", self.match_direction.to_string()),
            ("analytics_max_pairs", self.analytics_max_pairs.to_string()),
            ("bench_losses", join(&self.bench_losses)),
            ("bench_reps", self.bench_reps.to_string()),
            ("gradcheck_seeds", self.gradcheck_seeds.to_string()),
            ("faces", self.faces.clone()),
            ("voices", self.voices.clone()),
            ("labels", self.labels.clone()),
            ("splits", self.splits.clone()),
            ("checkpoint", self.checkpoint.clone()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let s = &mut self.synth;
        let t = &mut self.train;
        let v = value;
        match key {
            "synth_seed" => s.seed = parse_one(key, v)?,
            "n_identities" => s.n_identities = parse_one(key, v)?,
            "samples_per_identity" => s.samples_per_identity = parse_one(key, v)?,
            "latent_dim" => s.latent_dim = parse_one(key, v)?,
            "face_dim" => s.face_dim = parse_one(key, v)?,
            "voice_dim" => s.voice_dim = parse_one(key, v)?,
            "face_noise" => s.face_noise = parse_one(key, v)?,
            "voice_noise" => s.voice_noise = parse_one(key, v)?,
            "val_frac" => s.val_frac = parse_one(key, v)?,
            "test_seen_frac" => s.test_seen_frac = parse_one(key, v)?,
            "test_unseen_frac" => s.test_unseen_frac = parse_one(key, v)?,
            "genders" => s.genders = parse_words(v),
            "nationalities" => s.nationalities = parse_words(v),
            "age_buckets" => s.age_buckets = parse_words(v),
            "seed" => t.seed = parse_one(key, v)?,
            "embed_dim" => t.embed_dim = parse_one(key, v)?,
            "att_hidden" => t.att_hidden = parse_list(key, v)?,
            "fusion" => t.fusion = parse_one::<Fusion>(key, v)?,
            "loss" => t.loss.kind = parse_one::<LossKind>(key, v)?,
            "alpha" => t.loss.alpha = parse_one(key, v)?,
            "oc_reduction" => t.loss.oc_reduction = parse_one::<OcReduction>(key, v)?,
            "contrastive_margin" => t.loss.contrastive_margin = parse_one(key, v)?,
            "triplet_margin" => t.loss.triplet_margin = parse_one(key, v)?,
            "lambda_c" => t.loss.lambda_c = parse_one(key, v)?,
            "lambda_g" => t.loss.lambda_g = parse_one(key, v)?,
            "batch_size" => t.batch_size = parse_one(key, v)?,
            "epochs" => t.epochs = parse_one(key, v)?,
            "lr" => t.lr = parse_one(key, v)?,
            "lr_decay" => t.lr_decay = parse_one(key, v)?,
            "adam_beta1" => t.adam.beta1 = parse_one(key, v)?,
            "adam_beta2" => t.adam.beta2 = parse_one(key, v)?,
            "adam_eps" => t.adam.eps = parse_one(key, v)?,
            "val_neg_per_pos" => t.val_neg_per_pos = parse_one(key, v)?,
            "eval_subset" => self.eval_subset = parse_one(key, v)?,
            "neg_per_pos" => self.neg_per_pos = parse_one(key, v)?,
            "stratify" => self.stratify = parse_list(key, v)?,
            "match_nc" => self.match_nc = parse_list(key, v)?,
            "match_trials" => self.match_trials = parse_one(key, v)?,
            "match_direction" => self.match_direction = parse_one(key, v)?,
            "analytics_max_pairs" => self.analytics_max_pairs = parse_one(key, v)?,
            "bench_losses" => self.bench_losses = parse_list(key, v)?,
            "bench_reps" => self.bench_reps = parse_one(key, v)?,
            "gradcheck_seeds" => self.gradcheck_seeds = parse_one(key, v)?,
            "faces" => self.faces = v.to_string(),
            "voices" => self.voices = v.to_string(),
            "labels" => self.labels = v.to_string(),
            "splits" => self.splits = v.to_string(),
            "checkpoint" => self.checkpoint = v.to_string(),
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values. `#` starts
    /// a comment; blank lines are ignored; a key may appear once.
    pub fn apply_text(&mut self, origin: &str, text: &str) -> Result<(), CliError> {
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("{origin}:{}: expected `key = value`", n + 1)));
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("{origin}:{}: duplicate key `{key}`", n + 1)));
            }
            self.set(key, value.trim())
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn from_text(origin: &str, text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(origin, text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&path.display().to_string(), &text)
    }

    /// Fully resolved form, every key present.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.neg_per_pos == 0 || self.match_trials == 0 || self.analytics_max_pairs == 0 {
            return Err(CliError::Config("neg_per_pos, match_trials and analytics_max_pairs must be positive".into()));
        }
        if self.bench_reps == 0 || self.gradcheck_seeds == 0 {
            return Err(CliError::Config("bench_reps and gradcheck_seeds must be positive".into()));
        }
        Ok(())
    }
}
