use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::text::{self, Lines};
use super::EmbeddingBank;
use crate::error::{Error, ParseErrorKind, Result};

/// Identity-level split assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    TestSeen,
    TestUnseen,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::TestSeen => "test_seen",
            Split::TestUnseen => "test_unseen",
        })
    }
}

impl FromStr for Split {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test_seen" => Ok(Split::TestSeen),
            "test_unseen" => Ok(Split::TestUnseen),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

/// Instance-level selection used by training and evaluation.
///
/// `test_seen` identities are trained on: the first half (rounded up) of each
/// such identity's instances, in bank order, belong to [`Subset::Train`] and
/// the rest are held out as [`Subset::TestSeen`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subset {
    Train,
    Val,
    TestSeen,
    TestUnseen,
}

impl FromStr for Subset {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "seen" | "test_seen" => Ok(Subset::TestSeen),
            "unseen" | "test_unseen" => Ok(Subset::TestUnseen),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRow {
    pub instance_id: String,
    pub identity: String,
    pub gender: String,
    pub nationality: String,
    pub age_bucket: String,
}

/// Per-instance identity and demographics plus the identity split map.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTable {
    rows: Vec<LabelRow>,
    by_instance: HashMap<String, usize>,
    splits: BTreeMap<String, Split>,
}

impl LabelTable {
    pub fn new(rows: Vec<LabelRow>, splits: BTreeMap<String, Split>) -> Result<Self> {
        let mut by_instance = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            for tok in [&r.instance_id, &r.identity, &r.gender, &r.nationality, &r.age_bucket] {
                text::check_token(tok)?;
            }
            if by_instance.insert(r.instance_id.clone(), i).is_some() {
                return Err(Error::Labels(format!("instance `{}` listed twice", r.instance_id)));
            }
            if !splits.contains_key(&r.identity) {
                return Err(Error::Labels(format!("identity `{}` has no split", r.identity)));
            }
        }
        Ok(LabelTable {
            rows,
            by_instance,
            splits,
        })
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn splits(&self) -> &BTreeMap<String, Split> {
        &self.splits
    }

    pub fn row(&self, instance_id: &str) -> Option<&LabelRow> {
        self.by_instance.get(instance_id).map(|&i| &self.rows[i])
    }

    pub fn identity_of(&self, instance_id: &str) -> Option<&str> {
        self.row(instance_id).map(|r| r.identity.as_str())
    }

    pub fn split_of(&self, identity: &str) -> Option<Split> {
        self.splits.get(identity).copied()
    }

    /// Identities assigned to `split`, sorted.
    pub fn identities_in(&self, split: Split) -> Vec<&str> {
        self.splits
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Identities whose instances appear in training (train and test_seen).
    pub fn training_identities(&self) -> Vec<&str> {
        self.splits
            .iter()
            .filter(|(_, &s)| matches!(s, Split::Train | Split::TestSeen))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Checks that every bank instance is labelled.
    pub fn validate_bank(&self, bank: &EmbeddingBank) -> Result<()> {
        for id in bank.ids() {
            if self.row(id).is_none() {
                return Err(Error::Labels(format!(
                    "{} instance `{id}` missing from labels",
                    bank.modality()
                )));
            }
        }
        Ok(())
    }

    /// Bank row indices belonging to `subset`, in bank order.
    pub fn subset_indices(&self, bank: &EmbeddingBank, subset: Subset) -> Result<Vec<usize>> {
        let mut per_identity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, id) in bank.ids().iter().enumerate() {
            let identity = self
                .identity_of(id)
                .ok_or_else(|| Error::UnknownInstance(id.clone()))?;
            per_identity.entry(identity).or_default().push(i);
        }
        let mut out = Vec::new();
        for (identity, idx) in per_identity {
            let split = self.splits[identity];
            let held = idx.len().div_ceil(2);
            let chosen: &[usize] = match (subset, split) {
                (Subset::Train, Split::Train)
                | (Subset::Val, Split::Val)
                | (Subset::TestUnseen, Split::TestUnseen) => &idx,
                (Subset::Train, Split::TestSeen) => &idx[..held],
                (Subset::TestSeen, Split::TestSeen) => &idx[held..],
                _ => &[],
            };
            out.extend_from_slice(chosen);
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn labels_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                r.instance_id, r.identity, r.gender, r.nationality, r.age_bucket
            );
        }
        out
    }

    pub fn splits_text(&self) -> String {
        let mut out = String::new();
        for (id, s) in &self.splits {
            let _ = writeln!(out, "{id} {s}");
        }
        out
    }

    pub fn from_text(labels: &str, splits: &str) -> Result<Self> {
        let splits = parse_splits(Lines::from_text("splits", splits))?;
        let rows = parse_rows(Lines::from_text("labels", labels))?;
        Self::new(rows, splits)
    }
}

pub fn write_labels(table: &LabelTable, path: &Path) -> Result<()> {
    text::write_file(path, &table.labels_text())
}

pub fn write_splits(table: &LabelTable, path: &Path) -> Result<()> {
    text::write_file(path, &table.splits_text())
}

/// Reads the label file and its companion split file.
pub fn read_labels(labels: &Path, splits: &Path) -> Result<LabelTable> {
    let splits = read_splits(splits)?;
    let rows = parse_rows(Lines::open(labels)?)?;
    LabelTable::new(rows, splits)
}

pub fn read_splits(path: &Path) -> Result<BTreeMap<String, Split>> {
    parse_splits(Lines::open(path)?)
}

fn parse_rows(mut lines: Lines) -> Result<Vec<LabelRow>> {
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    while let Some((ln, line)) = lines.next_line() {
        let f = text::fields(&line);
        if f.len() != 5 {
            return Err(lines.err(ln, ParseErrorKind::FieldCount { expected: 5, found: f.len() }));
        }
        if seen.insert(f[0].to_string(), ln).is_some() {
            return Err(lines.err(ln, ParseErrorKind::Duplicate(f[0].to_string())));
        }
        rows.push(LabelRow {
            instance_id: f[0].into(),
            identity: f[1].into(),
            gender: f[2].into(),
            nationality: f[3].into(),
            age_bucket: f[4].into(),
        });
    }
    Ok(rows)
}

fn parse_splits(mut lines: Lines) -> Result<BTreeMap<String, Split>> {
    let mut out = BTreeMap::new();
    while let Some((ln, line)) = lines.next_line() {
        let f = text::fields(&line);
        if f.len() != 2 {
            return Err(lines.err(ln, ParseErrorKind::FieldCount { expected: 2, found: f.len() }));
        }
        let split: Split = f[1].parse().map_err(|k| lines.err(ln, k))?;
        match out.insert(f[0].to_string(), split) {
            None => {}
            Some(prev) if prev != split => {
                return Err(Error::Labels(format!(
                    "identity `{}` assigned to both {prev} and {split} (line {ln})",
                    f[0]
                )));
            }
            Some(_) => return Err(lines.err(ln, ParseErrorKind::Duplicate(f[0].to_string()))),
        }
    }
    Ok(out)
}
