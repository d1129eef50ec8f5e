//! Identity-conditioned synthetic face/voice corpora.
//!
//! Each identity owns a latent `z ~ N(0, I_m)`. Two fixed random maps, drawn
//! once per corpus, send it into the face and voice spaces; every sample adds
//! isotropic Gaussian noise on top. Demographics are drawn independently of
//! the latent.

use std::collections::BTreeMap;

use crate::dataio::{EmbeddingBank, LabelRow, LabelTable, Modality, Split};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub samples_per_identity: usize,
    pub latent_dim: usize,
    pub face_dim: usize,
    pub voice_dim: usize,
    pub face_noise: f64,
    pub voice_noise: f64,
    pub val_frac: f64,
    pub test_seen_frac: f64,
    pub test_unseen_frac: f64,
    pub genders: Vec<String>,
    pub nationalities: Vec<String>,
    pub age_buckets: Vec<String>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 88 identities: 64 train, 8 val, 16 unseen test.
    fn default() -> Self {
        SynthConfig {
            n_identities: 88,
            samples_per_identity: 10,
            latent_dim: 16,
            face_dim: 64,
            voice_dim: 48,
            face_noise: 0.05,
            voice_noise: 0.05,
            val_frac: 0.09,
            test_seen_frac: 0.0,
            test_unseen_frac: 0.18,
            genders: vec!["m".into(), "f".into()],
            nationalities: ["us", "uk", "in", "ca", "au"].map(String::from).to_vec(),
            age_buckets: ["20s", "30s", "40s", "50s"].map(String::from).to_vec(),
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.face_noise = sigma;
        self.voice_noise = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::contract("SynthConfig", msg));
        if self.n_identities == 0 || self.samples_per_identity == 0 {
            return bad("identity and sample counts must be at least 1".into());
        }
        if self.latent_dim < 2 || self.face_dim < 2 || self.voice_dim < 2 {
            return bad("dimensions must be at least 2".into());
        }
        if !(self.face_noise >= 0.0 && self.voice_noise >= 0.0)
            || !self.face_noise.is_finite()
            || !self.voice_noise.is_finite()
        {
            return bad("noise must be finite and non-negative".into());
        }
        let fracs = [self.val_frac, self.test_seen_frac, self.test_unseen_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 {
            return bad(format!("split fractions {fracs:?} must lie in [0,1] and sum to at most 1"));
        }
        for (name, vocab) in [
            ("genders", &self.genders),
            ("nationalities", &self.nationalities),
            ("age_buckets", &self.age_buckets),
        ] {
            if vocab.is_empty() {
                return bad(format!("{name} vocabulary is empty"));
            }
        }
        Ok(())
    }

    /// Identity counts per split: (train, val, test_seen, test_unseen).
    pub fn split_counts(&self) -> (usize, usize, usize, usize) {
        let n = self.n_identities;
        let take = |f: f64| (f * n as f64).round() as usize;
        let val = take(self.val_frac).min(n);
        let seen = take(self.test_seen_frac).min(n - val);
        let unseen = take(self.test_unseen_frac).min(n - val - seen);
        (n - val - seen - unseen, val, seen, unseen)
    }
}

/// A generated corpus together with the latent maps that produced it.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub faces: EmbeddingBank,
    pub voices: EmbeddingBank,
    pub labels: LabelTable,
    /// `face_dim × latent_dim`.
    pub face_map: Matrix<f64>,
    /// `voice_dim × latent_dim`.
    pub voice_map: Matrix<f64>,
    /// `n_identities × latent_dim`, row `c` is identity `c`'s latent.
    pub latents: Matrix<f64>,
}

pub fn identity_name(c: usize) -> String {
    format!("id{c:04}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let m = cfg.latent_dim;
    // Clean samples have unit expected squared norm, like normalized
    // encoder outputs, so the noise level reads relative to that.
    let face_scale = 1.0 / ((m * cfg.face_dim) as f64).sqrt();
    let voice_scale = 1.0 / ((m * cfg.voice_dim) as f64).sqrt();
    let face_map = Matrix::from_fn(cfg.face_dim, m, |_, _| rng.normal() * face_scale);
    let voice_map = Matrix::from_fn(cfg.voice_dim, m, |_, _| rng.normal() * voice_scale);
    let latents = Matrix::from_fn(cfg.n_identities, m, |_, _| rng.normal());

    let demographics: Vec<[String; 3]> = (0..cfg.n_identities)
        .map(|_| {
            [
                rng.choose(&cfg.genders).clone(),
                rng.choose(&cfg.nationalities).clone(),
                rng.choose(&cfg.age_buckets).clone(),
            ]
        })
        .collect();

    let mut order: Vec<usize> = (0..cfg.n_identities).collect();
    rng.shuffle(&mut order);
    let (_, n_val, n_seen, n_unseen) = cfg.split_counts();
    let mut splits = BTreeMap::new();
    for (rank, &c) in order.iter().enumerate() {
        let split = if rank < n_val {
            Split::Val
        } else if rank < n_val + n_seen {
            Split::TestSeen
        } else if rank < n_val + n_seen + n_unseen {
            Split::TestUnseen
        } else {
            Split::Train
        };
        splits.insert(identity_name(c), split);
    }

    let per = cfg.samples_per_identity;
    let n = cfg.n_identities * per;
    let mut face_ids = Vec::with_capacity(n);
    let mut voice_ids = Vec::with_capacity(n);
    let mut face_data = Vec::with_capacity(n * cfg.face_dim);
    let mut voice_data = Vec::with_capacity(n * cfg.voice_dim);
    let mut rows = Vec::with_capacity(2 * n);
    for c in 0..cfg.n_identities {
        let z = latents.row(c);
        let clean_face: Vec<f64> = face_map.iter_rows().map(|r| crate::numcore::dot(r, z)).collect();
        let clean_voice: Vec<f64> = voice_map.iter_rows().map(|r| crate::numcore::dot(r, z)).collect();
        let [g, nat, age] = &demographics[c];
        for (kind, ids, data, clean, sigma) in [
            ("f", &mut face_ids, &mut face_data, &clean_face, cfg.face_noise),
            ("v", &mut voice_ids, &mut voice_data, &clean_voice, cfg.voice_noise),
        ] {
            for s in 0..per {
                let id = format!("{}_{kind}{s:03}", identity_name(c));
                data.extend(clean.iter().map(|&x| x + sigma * rng.normal()));
                rows.push(LabelRow {
                    instance_id: id.clone(),
                    identity: identity_name(c),
                    gender: g.clone(),
                    nationality: nat.clone(),
                    age_bucket: age.clone(),
                });
                ids.push(id);
            }
        }
    }

    let faces = EmbeddingBank::new(
        Modality::Face,
        face_ids,
        Matrix::from_vec(n, cfg.face_dim, face_data)?,
    )?;
    let voices = EmbeddingBank::new(
        Modality::Voice,
        voice_ids,
        Matrix::from_vec(n, cfg.voice_dim, voice_data)?,
    )?;
    let labels = LabelTable::new(rows, splits)?;
    Ok(SynthCorpus {
        faces,
        voices,
        labels,
        face_map,
        voice_map,
        latents,
    })
}
