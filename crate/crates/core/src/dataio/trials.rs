use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::text::{self, Lines};
use super::{EmbeddingBank, LabelTable, Subset};
use crate::error::{Error, ParseErrorKind, Result};
use crate::numcore::Rng;

/// Demographic restriction on negative pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stratify {
    None,
    Gender,
    Nationality,
    Age,
    /// Gender, nationality and age bucket all match.
    All,
}

impl Stratify {
    pub const ALL: [Stratify; 5] = [
        Stratify::None,
        Stratify::Gender,
        Stratify::Nationality,
        Stratify::Age,
        Stratify::All,
    ];

    fn key(self, gender: &str, nationality: &str, age: &str) -> String {
        match self {
            Stratify::None => String::new(),
            Stratify::Gender => gender.to_string(),
            Stratify::Nationality => nationality.to_string(),
            Stratify::Age => age.to_string(),
            Stratify::All => format!("{gender}/{nationality}/{age}"),
        }
    }
}

impl fmt::Display for Stratify {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratify::None => "none",
            Stratify::Gender => "G",
            Stratify::Nationality => "N",
            Stratify::Age => "A",
            Stratify::All => "GNA",
        })
    }
}

impl FromStr for Stratify {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Stratify::None),
            "G" => Ok(Stratify::Gender),
            "N" => Ok(Stratify::Nationality),
            "A" => Ok(Stratify::Age),
            "GNA" => Ok(Stratify::All),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

/// One face/voice verification pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub face: String,
    pub voice: String,
    pub same: bool,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    /// Strata dropped because they held fewer than two identities.
    pub skipped_strata: usize,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.trials.iter().filter(|t| t.same).count()
    }

    pub fn n_neg(&self) -> usize {
        self.trials.len() - self.n_pos()
    }

    pub fn scored(&self) -> Vec<(f64, bool)> {
        self.trials.iter().map(|t| (t.score, t.same)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "FVTRIALS 1 {}", self.trials.len());
        for t in &self.trials {
            let _ = writeln!(out, "{} {} {} {}", t.face, t.voice, u8::from(t.same), t.score);
        }
        out
    }

    pub fn from_text(path: &str, text: &str) -> Result<Self> {
        parse(Lines::from_text(path, text))
    }
}

pub fn write_trials(set: &TrialSet, path: &Path) -> Result<()> {
    text::write_file(path, &set.to_text())
}

pub fn read_trials(path: &Path) -> Result<TrialSet> {
    parse(Lines::open(path)?)
}

fn parse(mut lines: Lines) -> Result<TrialSet> {
    let (hn, header) = lines
        .next_line()
        .ok_or_else(|| lines.err(1, ParseErrorKind::Header("empty file".into())))?;
    let h = text::fields(&header);
    if h.len() != 3 || h[0] != "FVTRIALS" || h[1] != "1" {
        return Err(lines.err(hn, ParseErrorKind::Header(header.clone())));
    }
    let n = text::parse_usize(h[2]).map_err(|k| lines.err(hn, k))?;
    let mut trials = Vec::with_capacity(n);
    for _ in 0..n {
        let ln = lines.next_number();
        let Some((ln, line)) = lines.next_line() else {
            return Err(lines.err(ln, ParseErrorKind::RowCount { expected: n, found: trials.len() }));
        };
        let f = text::fields(&line);
        if f.len() != 4 {
            return Err(lines.err(ln, ParseErrorKind::FieldCount { expected: 4, found: f.len() }));
        }
        let same = match f[2] {
            "1" => true,
            "0" => false,
            other => return Err(lines.err(ln, ParseErrorKind::Token(other.to_string()))),
        };
        let score = text::parse_f64(f[3]).map_err(|k| lines.err(ln, k))?;
        trials.push(Trial {
            face: f[0].into(),
            voice: f[1].into(),
            same,
            score,
        });
    }
    lines.finish()?;
    Ok(TrialSet {
        trials,
        skipped_strata: 0,
    })
}

/// Samples verification trials over `subset`.
///
/// Each face instance gets one positive (a uniformly drawn same-identity
/// voice instance) and `n_neg_per_pos` negatives: a uniformly drawn identity
/// from the same stratum, then a uniformly drawn voice instance of it. An
/// identity's demographics are those of its first row in the label table.
pub fn make_trials(
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    labels: &LabelTable,
    subset: Subset,
    stratify: Stratify,
    n_neg_per_pos: usize,
    rng: &mut Rng,
) -> Result<TrialSet> {
    let face_idx = labels.subset_indices(faces, subset)?;
    let voice_idx = labels.subset_indices(voices, subset)?;

    let mut voices_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &voice_idx {
        let identity = labels.identity_of(voices.id(i)).expect("checked by subset_indices");
        voices_of.entry(identity).or_default().push(i);
    }
    let mut key_of: BTreeMap<&str, String> = BTreeMap::new();
    for r in labels.rows() {
        key_of
            .entry(r.identity.as_str())
            .or_insert_with(|| stratify.key(&r.gender, &r.nationality, &r.age_bucket));
    }

    let present: Vec<&str> = face_idx
        .iter()
        .filter_map(|&i| labels.identity_of(faces.id(i)))
        .filter(|id| voices_of.contains_key(id))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for &id in &present {
        strata.entry(key_of[id].as_str()).or_default().push(id);
    }
    let skipped_strata = strata.values().filter(|ids| ids.len() < 2).count();
    let eligible: BTreeMap<&str, Vec<&str>> = present
        .iter()
        .map(|&id| {
            let others = strata[key_of[id].as_str()].iter().copied().filter(|&o| o != id).collect();
            (id, others)
        })
        .collect();

    let mut trials = Vec::new();
    for &fi in &face_idx {
        let identity = labels.identity_of(faces.id(fi)).expect("checked by subset_indices");
        let Some(others) = eligible.get(identity) else { continue };
        if others.is_empty() {
            continue;
        }
        let own = &voices_of[identity];
        trials.push(Trial {
            face: faces.id(fi).to_string(),
            voice: voices.id(*rng.choose(own)).to_string(),
            same: true,
            score: 0.0,
        });
        for _ in 0..n_neg_per_pos {
            let other = *rng.choose(others);
            let vi = *rng.choose(&voices_of[other]);
            trials.push(Trial {
                face: faces.id(fi).to_string(),
                voice: voices.id(vi).to_string(),
                same: false,
                score: 0.0,
            });
        }
    }

    let set = TrialSet {
        trials,
        skipped_strata,
    };
    if set.n_pos() == 0 || set.n_neg() == 0 {
        return Err(Error::DegenerateTrials(format!(
            "stratify={stratify}: {} positives, {} negatives ({} strata skipped)",
            set.n_pos(),
            set.n_neg(),
            skipped_strata
        )));
    }
    Ok(set)
}
