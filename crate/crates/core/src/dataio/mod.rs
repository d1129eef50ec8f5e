//! Text file formats for embedding banks, label tables, split maps and
//! trial lists.
//!
//! Every float is written with Rust's shortest round-trip representation, so
//! `write` followed by `read` reproduces each `f64` bit for bit.

mod bank;
mod labels;
pub(crate) mod text;
mod trials;

pub use bank::{read_bank, write_bank, EmbeddingBank, Modality};
pub use labels::{
    read_labels, read_splits, write_labels, write_splits, LabelRow, LabelTable, Split, Subset,
};
pub use trials::{make_trials, read_trials, write_trials, Stratify, Trial, TrialSet};
