use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::verify::PairScorer;
use crate::dataio::{EmbeddingBank, LabelTable, Subset};
use crate::error::{Error, ParseErrorKind, Result};
use crate::numcore::Rng;

/// Which modality supplies the probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatchDirection {
    /// Voice probe, face gallery.
    VoiceToFace,
    /// Face probe, voice gallery.
    FaceToVoice,
}

impl fmt::Display for MatchDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchDirection::VoiceToFace => "v2f",
            MatchDirection::FaceToVoice => "f2v",
        })
    }
}

impl FromStr for MatchDirection {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v2f" => Ok(MatchDirection::VoiceToFace),
            "f2v" => Ok(MatchDirection::FaceToVoice),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchReport {
    pub n_c: usize,
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Instances of `subset` grouped by identity, for both modalities, keeping
/// only identities present in both.
struct Pools {
    faces: Vec<Vec<usize>>,
    voices: Vec<Vec<usize>>,
}

impl Pools {
    fn new(faces: &EmbeddingBank, voices: &EmbeddingBank, labels: &LabelTable, subset: Subset) -> Result<Self> {
        let group = |bank: &EmbeddingBank| -> Result<BTreeMap<String, Vec<usize>>> {
            let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for i in labels.subset_indices(bank, subset)? {
                let id = labels.identity_of(bank.id(i)).expect("checked by subset_indices");
                out.entry(id.to_string()).or_default().push(i);
            }
            Ok(out)
        };
        let mut f = group(faces)?;
        let mut v = group(voices)?;
        let common: Vec<String> = f.keys().filter(|k| v.contains_key(*k)).cloned().collect();
        Ok(Pools {
            faces: common.iter().map(|k| f.remove(k).expect("common key")).collect(),
            voices: common.iter().map(|k| v.remove(k).expect("common key")).collect(),
        })
    }
}

/// 1:n_c cross-modal matching.
///
/// Each trial draws a probe identity and instance, then a gallery of `n_c`
/// instances from the other modality: one of the probe's identity and one
/// from each of `n_c − 1` distinct other identities. A trial is correct iff
/// the true match scores strictly higher than every impostor.
#[allow(clippy::too_many_arguments)]
pub fn match_1_to_n(
    scorer: &impl PairScorer,
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    labels: &LabelTable,
    subset: Subset,
    n_c: usize,
    n_trials: usize,
    direction: MatchDirection,
    rng: &mut Rng,
) -> Result<MatchReport> {
    let pools = Pools::new(faces, voices, labels, subset)?;
    let n_ids = pools.faces.len();
    if n_c < 2 || n_c > n_ids {
        return Err(Error::DegenerateTrials(format!(
            "1:{n_c} matching needs 2 <= n_c <= {n_ids} identities"
        )));
    }
    if n_trials == 0 {
        return Err(Error::DegenerateTrials("zero matching trials".into()));
    }
    let (probe_pool, gallery_pool) = match direction {
        MatchDirection::VoiceToFace => (&pools.voices, &pools.faces),
        MatchDirection::FaceToVoice => (&pools.faces, &pools.voices),
    };
    let score = |probe: usize, cand: usize| match direction {
        MatchDirection::VoiceToFace => scorer.score(cand, probe),
        MatchDirection::FaceToVoice => scorer.score(probe, cand),
    };
    let mut correct = 0;
    for _ in 0..n_trials {
        let id = rng.below(n_ids);
        let probe = *rng.choose(&probe_pool[id]);
        let truth = score(probe, *rng.choose(&gallery_pool[id]));
        let mut wins = true;
        for other in rng.sample_distinct(n_ids - 1, n_c - 1) {
            let other = if other >= id { other + 1 } else { other };
            if score(probe, *rng.choose(&gallery_pool[other])) >= truth {
                wins = false;
            }
        }
        correct += usize::from(wins);
    }
    Ok(MatchReport {
        n_c,
        trials: n_trials,
        correct,
        accuracy: correct as f64 / n_trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SynthConfig};

    struct Oracle<'a> {
        faces: &'a EmbeddingBank,
        voices: &'a EmbeddingBank,
        labels: &'a LabelTable,
    }

    impl PairScorer for Oracle<'_> {
        fn score(&self, f: usize, v: usize) -> f64 {
            let a = self.labels.identity_of(self.faces.id(f));
            let b = self.labels.identity_of(self.voices.id(v));
            if a == b {
                1.0
            } else {
                0.0
            }
        }
    }

    struct Constant;

    impl PairScorer for Constant {
        fn score(&self, _: usize, _: usize) -> f64 {
            0.25
        }
    }

    #[test]
    fn identity_revealing_scorer_is_perfect() {
        let c = generate(&SynthConfig::default()).unwrap();
        let o = Oracle {
            faces: &c.faces,
            voices: &c.voices,
            labels: &c.labels,
        };
        for dir in [MatchDirection::VoiceToFace, MatchDirection::FaceToVoice] {
            for n_c in [2, 5, 10] {
                let r = match_1_to_n(&o, &c.faces, &c.voices, &c.labels, Subset::TestUnseen, n_c, 300, dir, &mut Rng::new(1))
                    .unwrap();
                assert_eq!(r.accuracy, 1.0);
            }
        }
    }

    #[test]
    fn ties_count_as_incorrect() {
        let c = generate(&SynthConfig::default()).unwrap();
        let r = match_1_to_n(
            &Constant,
            &c.faces,
            &c.voices,
            &c.labels,
            Subset::TestUnseen,
            2,
            100,
            MatchDirection::VoiceToFace,
            &mut Rng::new(1),
        )
        .unwrap();
        assert_eq!(r.correct, 0);
    }

    #[test]
    fn too_many_candidates_rejected() {
        let c = generate(&SynthConfig::default()).unwrap();
        let r = match_1_to_n(
            &Constant,
            &c.faces,
            &c.voices,
            &c.labels,
            Subset::TestUnseen,
            17,
            10,
            MatchDirection::VoiceToFace,
            &mut Rng::new(1),
        );
        assert!(matches!(r, Err(Error::DegenerateTrials(_))));
    }

    #[test]
    fn direction_tokens_round_trip() {
        for d in [MatchDirection::VoiceToFace, MatchDirection::FaceToVoice] {
            assert_eq!(d.to_string().parse::<MatchDirection>().unwrap(), d);
        }
    }
}
