use super::metrics::{auc, eer};
use crate::dataio::{make_trials, EmbeddingBank, LabelTable, Stratify, Subset, TrialSet};
use crate::error::{Error, Result};
use crate::fopmodel::FopParams;
use crate::numcore::{dot, Matrix, Rng, Scalar};

/// Scores a (face instance, voice instance) pair by bank row index.
pub trait PairScorer {
    fn score(&self, face: usize, voice: usize) -> f64;
}

/// Cosine between the normalized projections `u` (faces) and `v` (voices),
/// precomputed for every bank row.
#[derive(Clone, Debug)]
pub struct ProjectionScorer {
    pub u: Matrix<f64>,
    pub v: Matrix<f64>,
}

impl ProjectionScorer {
    pub fn new<T: Scalar>(params: &FopParams<T>, faces: &EmbeddingBank, voices: &EmbeddingBank) -> Result<Self> {
        let u = params.embed_faces(&faces.vectors().cast())?.cast();
        let v = params.embed_voices(&voices.vectors().cast())?.cast();
        Ok(ProjectionScorer { u, v })
    }
}

impl PairScorer for ProjectionScorer {
    fn score(&self, face: usize, voice: usize) -> f64 {
        // Rows are unit length (or zero), so the dot product is the cosine.
        dot(self.u.row(face), self.v.row(voice)).clamp(-1.0, 1.0)
    }
}

/// Fills in `score` for every trial.
pub fn score_trials(
    scorer: &impl PairScorer,
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    trials: &TrialSet,
) -> Result<TrialSet> {
    let mut out = trials.clone();
    for t in &mut out.trials {
        let f = faces
            .position(&t.face)
            .ok_or_else(|| Error::UnknownInstance(t.face.clone()))?;
        let v = voices
            .position(&t.voice)
            .ok_or_else(|| Error::UnknownInstance(t.voice.clone()))?;
        t.score = scorer.score(f, v);
    }
    Ok(out)
}

/// One row of a verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyResult {
    pub stratum: Stratify,
    pub eer: f64,
    pub threshold: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub trials: TrialSet,
}

impl VerifyResult {
    pub fn from_trials(stratum: Stratify, trials: TrialSet) -> Result<Self> {
        let scored = trials.scored();
        let (eer, threshold) = eer(&scored)?;
        Ok(VerifyResult {
            stratum,
            eer,
            threshold,
            auc: auc(&scored)?,
            n_pos: trials.n_pos(),
            n_neg: trials.n_neg(),
            trials,
        })
    }
}

/// Samples trials over `subset`, scores them and computes EER and AUC.
#[allow(clippy::too_many_arguments)]
pub fn verify(
    scorer: &impl PairScorer,
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    labels: &LabelTable,
    subset: Subset,
    stratify: Stratify,
    neg_per_pos: usize,
    rng: &mut Rng,
) -> Result<VerifyResult> {
    let trials = make_trials(faces, voices, labels, subset, stratify, neg_per_pos, rng)?;
    VerifyResult::from_trials(stratify, score_trials(scorer, faces, voices, &trials)?)
}
