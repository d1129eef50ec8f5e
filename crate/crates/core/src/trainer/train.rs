use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::objective::{batch_objective, sample_negatives, Batch, LossConfig};
use crate::dataio::{make_trials, EmbeddingBank, LabelTable, Stratify, Subset, TrialSet};
use crate::error::{Error, Result};
use crate::evalsuite::{score_trials, ProjectionScorer, VerifyResult};
use crate::fopmodel::{FopParams, Fusion, InitScheme, ModelDims};
use crate::losses::LossKind;
use crate::numcore::{Matrix, Rng, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub loss: LossConfig,
    pub fusion: Fusion,
    pub att_hidden: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Negatives per positive in the validation trial set.
    pub val_neg_per_pos: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 128,
            loss: LossConfig::default(),
            fusion: Fusion::Gated,
            att_hidden: Vec::new(),
            batch_size: 128,
            epochs: 50,
            lr: 1e-3,
            lr_decay: 0.95,
            adam: AdamConfig::default(),
            seed: 1,
            val_neg_per_pos: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::contract("TrainConfig", msg));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.embed_dim == 0 || self.att_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.loss.alpha >= 0.0 && self.loss.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.loss.alpha));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive".into());
        }
        Ok(())
    }

    /// Learning rate in effect during epoch `t` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(i32::try_from(epoch).unwrap_or(i32::MAX))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    pub ce_term: f64,
    pub oc_term: f64,
    /// `None` when the validation split cannot form trials.
    pub val_eer: Option<f64>,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,ce_term,oc_term,val_eer,lr\n");
    for r in history {
        let eer = r.val_eer.map_or_else(|| "nan".to_string(), |e| e.to_string());
        let _ = writeln!(out, "{},{},{},{},{},{}", r.epoch, r.loss, r.ce_term, r.oc_term, eer, r.lr);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: FopParams<T>,
    pub history: Vec<EpochRecord>,
    /// Class index to identity name.
    pub classes: Vec<String>,
    pub centers: Option<Matrix<T>>,
}

/// Training instances: face rows with class labels and, per class, the
/// voice rows available for pairing.
struct TrainSet<T> {
    faces: Matrix<T>,
    voices: Matrix<T>,
    face_labels: Vec<usize>,
    voices_of: Vec<Vec<usize>>,
    classes: Vec<String>,
}

impl<T: Scalar> TrainSet<T> {
    fn new(faces: &EmbeddingBank, voices: &EmbeddingBank, labels: &LabelTable) -> Result<Self> {
        let classes: Vec<String> = labels.training_identities().into_iter().map(String::from).collect();
        if classes.is_empty() {
            return Err(Error::Labels("no training identities".into()));
        }
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(k, c)| (c.as_str(), k)).collect();
        let class_of = |bank: &EmbeddingBank, i: usize| index[labels.identity_of(bank.id(i)).expect("checked")];

        let fi = labels.subset_indices(faces, Subset::Train)?;
        let vi = labels.subset_indices(voices, Subset::Train)?;
        let face_labels: Vec<usize> = fi.iter().map(|&i| class_of(faces, i)).collect();
        let mut voices_of = vec![Vec::new(); classes.len()];
        for (row, &i) in vi.iter().enumerate() {
            voices_of[class_of(voices, i)].push(row);
        }
        if let Some(k) = face_labels.iter().find(|&&k| voices_of[k].is_empty()) {
            return Err(Error::Labels(format!(
                "training identity `{}` has face but no voice instances",
                classes[*k]
            )));
        }
        if face_labels.len() < 2 {
            return Err(Error::Labels(format!("{} training face instances; need at least 2", face_labels.len())));
        }
        Ok(TrainSet {
            faces: faces.vectors().select_rows(&fi).cast(),
            voices: voices.vectors().select_rows(&vi).cast(),
            face_labels,
            voices_of,
            classes,
        })
    }

    /// Shuffled batches for one epoch; a trailing batch of one row is dropped.
    fn batches(&self, batch_size: usize, rng: &mut Rng) -> Vec<Batch<T>> {
        let mut order: Vec<usize> = (0..self.face_labels.len()).collect();
        rng.shuffle(&mut order);
        let voice_rows: Vec<usize> = order
            .iter()
            .map(|&i| *rng.choose(&self.voices_of[self.face_labels[i]]))
            .collect();
        order
            .chunks(batch_size)
            .zip(voice_rows.chunks(batch_size))
            .filter(|(f, _)| f.len() >= 2)
            .map(|(f, v)| {
                let labels: Vec<usize> = f.iter().map(|&i| self.face_labels[i]).collect();
                Batch {
                    faces: self.faces.select_rows(f),
                    voices: self.voices.select_rows(v),
                    negatives: sample_negatives(&labels, rng),
                    labels,
                }
            })
            .collect()
    }
}

/// Validation EER, or `None` when no trial set could be formed.
fn val_eer<T: Scalar>(
    params: &FopParams<T>,
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    trials: Option<&TrialSet>,
) -> Result<Option<f64>> {
    let Some(trials) = trials else { return Ok(None) };
    let scorer = ProjectionScorer::new(params, faces, voices)?;
    let scored = score_trials(&scorer, faces, voices, trials)?;
    Ok(Some(VerifyResult::from_trials(Stratify::None, scored)?.eer))
}

/// Trains a fusion head on the training split.
///
/// Random streams derived from `cfg.seed` drive initialization (stream 0),
/// batching and pairing (stream 1) and validation trials (stream 2), so a
/// run is fully determined by its config and inputs.
pub fn train<T: Scalar>(
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    labels: &LabelTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    labels.validate_bank(faces)?;
    labels.validate_bank(voices)?;
    let data = TrainSet::<T>::new(faces, voices, labels)?;

    let mut dims = ModelDims::new(faces.dim(), voices.dim(), cfg.embed_dim, data.classes.len());
    dims.att_hidden = cfg.att_hidden.clone();
    let mut params = FopParams::<T>::init(dims, cfg.fusion, InitScheme::XavierUniform, &mut Rng::stream(cfg.seed, 0));
    let mut state = AdamState::new(&params);
    let mut centers = matches!(cfg.loss.kind, LossKind::Center | LossKind::Git)
        .then(|| Matrix::<T>::zeros(data.classes.len(), cfg.embed_dim));
    let mut batch_rng = Rng::stream(cfg.seed, 1);
    let val_trials = match make_trials(
        faces,
        voices,
        labels,
        Subset::Val,
        Stratify::None,
        cfg.val_neg_per_pos,
        &mut Rng::stream(cfg.seed, 2),
    ) {
        Ok(t) => Some(t),
        Err(Error::DegenerateTrials(_)) => None,
        Err(e) => return Err(e),
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let batches = data.batches(cfg.batch_size, &mut batch_rng);
        let (mut loss, mut ce, mut oc) = (0.0, 0.0, 0.0);
        for (b, batch) in batches.iter().enumerate() {
            let out = batch_objective(&params, batch, &cfg.loss, centers.as_ref())?;
            if !out.value.is_finite() || !out.grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: out.value.as_f64(),
                    ce: out.terms.ce.as_f64(),
                    oc: out.terms.oc.as_f64(),
                });
            }
            adam_step(&mut params, &out.grads, &mut state, T::lit(lr), &cfg.adam)?;
            if out.centers.is_some() {
                centers = out.centers;
            }
            loss += out.value.as_f64();
            ce += out.terms.ce.as_f64();
            oc += out.terms.oc.as_f64();
        }
        let n = batches.len().max(1) as f64;
        history.push(EpochRecord {
            epoch,
            loss: loss / n,
            ce_term: ce / n,
            oc_term: oc / n,
            val_eer: val_eer(&params, faces, voices, val_trials.as_ref())?,
            lr,
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        classes: data.classes,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SynthConfig};

    fn small() -> (crate::synthgen::SynthCorpus, TrainConfig) {
        let corpus = generate(&SynthConfig {
            n_identities: 20,
            samples_per_identity: 6,
            face_dim: 12,
            voice_dim: 10,
            latent_dim: 6,
            val_frac: 0.2,
            test_unseen_frac: 0.2,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            embed_dim: 8,
            batch_size: 16,
            epochs: 4,
            ..Default::default()
        };
        (corpus, cfg)
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let (c, cfg) = small();
        let a = train::<f64>(&c.faces, &c.voices, &c.labels, &cfg).unwrap();
        let b = train::<f64>(&c.faces, &c.voices, &c.labels, &cfg).unwrap();
        assert_eq!(a, b);
        let other = train::<f64>(&c.faces, &c.voices, &c.labels, &TrainConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.params, other.params);
    }

    #[test]
    fn lr_schedule_is_exact_power() {
        let (c, cfg) = small();
        let out = train::<f64>(&c.faces, &c.voices, &c.labels, &cfg).unwrap();
        for r in &out.history {
            assert_eq!(r.lr, 1e-3 * 0.95f64.powi(r.epoch as i32));
        }
        assert_eq!(out.history.len(), 4);
        assert!(out.history.iter().all(|r| r.val_eer.is_some()));
    }

    #[test]
    fn every_loss_kind_trains() {
        let (c, cfg) = small();
        for kind in LossKind::ALL {
            let cfg = TrainConfig {
                loss: LossConfig { kind, ..Default::default() },
                epochs: 2,
                ..cfg.clone()
            };
            let out = train::<f64>(&c.faces, &c.voices, &c.labels, &cfg).unwrap();
            assert!(out.params.is_finite(), "{kind}");
            assert_eq!(out.centers.is_some(), matches!(kind, LossKind::Center | LossKind::Git));
        }
    }

    #[test]
    fn single_precision_runs() {
        let (c, cfg) = small();
        let out = train::<f32>(&c.faces, &c.voices, &c.labels, &cfg).unwrap();
        assert!(out.params.is_finite());
    }

    #[test]
    fn classes_are_training_identities() {
        let (c, cfg) = small();
        let out = train::<f64>(&c.faces, &c.voices, &c.labels, &TrainConfig { epochs: 1, ..cfg }).unwrap();
        assert_eq!(out.classes.len(), out.params.dims.n_classes);
        assert_eq!(out.classes, c.labels.training_identities());
    }

    #[test]
    fn overflowing_parameters_abort_with_diagnostic() {
        let (c, cfg) = small();
        let err = train::<f64>(&c.faces, &c.voices, &c.labels, &TrainConfig { lr: 1e308, ..cfg }).unwrap_err();
        match err {
            Error::NonFiniteLoss { epoch, batch, .. } => assert!(epoch == 0 && batch > 0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let (c, cfg) = small();
        for bad in [
            TrainConfig { batch_size: 1, ..cfg.clone() },
            TrainConfig { lr_decay: 0.0, ..cfg.clone() },
            TrainConfig { lr_decay: 1.5, ..cfg.clone() },
        ] {
            assert!(train::<f64>(&c.faces, &c.voices, &c.labels, &bad).is_err());
        }
    }

    #[test]
    fn history_csv_layout() {
        let rows = [EpochRecord {
            epoch: 0,
            loss: 1.5,
            ce_term: 1.0,
            oc_term: 0.5,
            val_eer: None,
            lr: 0.001,
        }];
        assert_eq!(history_csv(&rows), "epoch,loss,ce_term,oc_term,val_eer,lr\n0,1.5,1,0.5,nan,0.001\n");
    }
}
