//! Training objectives with analytic gradients.
//!
//! Each loss returns a [`LossOutput`] whose `grads` line up, in order, with
//! the matrix arguments of the function that produced it.

mod centers;
mod classify;
mod orthogonal;
mod pairwise;

use std::fmt;
use std::str::FromStr;

pub use centers::{center_loss, git_loss, CenterOutput};
pub use classify::{ce_loss, joint_loss};
pub use orthogonal::{oc_loss, OcReduction};
pub use pairwise::{contrastive_loss, contrastive_loss_all, triplet_loss, triplet_loss_all};

use crate::error::{Error, ParseErrorKind, Result};
use crate::numcore::{Matrix, Scalar};

/// Diagnostic breakdown of a loss value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTerms<T> {
    pub ce: T,
    pub oc: T,
    /// Center-loss pull, Git push, contrastive or triplet term.
    pub aux: T,
    pub n_same: usize,
    pub n_diff: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub value: T,
    pub grads: Vec<Matrix<T>>,
    pub terms: LossTerms<T>,
}

/// Which objective drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Cross-entropy plus `alpha` times the orthogonality constraint.
    Joint,
    Ce,
    /// The orthogonality constraint alone, without cross-entropy.
    Oc,
    /// Cross-entropy plus center loss.
    Center,
    /// Cross-entropy plus Git loss.
    Git,
    Contrastive,
    Triplet,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Joint,
        LossKind::Ce,
        LossKind::Oc,
        LossKind::Center,
        LossKind::Git,
        LossKind::Contrastive,
        LossKind::Triplet,
    ];
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Joint => "joint",
            LossKind::Ce => "ce",
            LossKind::Oc => "oc",
            LossKind::Center => "center",
            LossKind::Git => "git",
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
        })
    }
}

impl FromStr for LossKind {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| ParseErrorKind::Token(s.to_string()))
    }
}

pub(crate) fn check_labels(op: &'static str, labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::contract(op, format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::contract(op, format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}
