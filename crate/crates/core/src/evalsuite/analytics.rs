use std::collections::BTreeMap;

use crate::dataio::{EmbeddingBank, LabelTable, Subset};
use crate::error::{Error, Result};
use crate::fopmodel::FopParams;
use crate::numcore::{cosine, Matrix, Rng, Scalar};

/// Pair statistics of fused embeddings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureStats {
    /// Mean |cos| over different-identity pairs.
    pub orthogonality: f64,
    /// Mean cos over same-identity pairs.
    pub same_sim: f64,
    /// Mean cos over different-identity pairs.
    pub diff_sim: f64,
    pub n_same: usize,
    pub n_diff: usize,
}

/// Pair statistics over rows of `l` labelled by `ids`.
///
/// All `i < j` pairs are used when there are at most `max_pairs` of them;
/// otherwise `max_pairs` pairs are drawn uniformly with replacement.
pub fn pair_stats(l: &Matrix<f64>, ids: &[usize], max_pairs: usize, rng: &mut Rng) -> Result<FeatureStats> {
    let n = l.rows();
    if ids.len() != n {
        return Err(Error::contract("pair_stats", format!("{} ids for {n} rows", ids.len())));
    }
    let (mut same, mut diff, mut abs_diff) = (0.0, 0.0, 0.0);
    let (mut n_same, mut n_diff) = (0usize, 0usize);
    let mut visit = |i: usize, j: usize| {
        let c = cosine(l.row(i), l.row(j));
        if ids[i] == ids[j] {
            same += c;
            n_same += 1;
        } else {
            diff += c;
            abs_diff += c.abs();
            n_diff += 1;
        }
    };
    let total = n * n.saturating_sub(1) / 2;
    if total <= max_pairs {
        for i in 0..n {
            for j in i + 1..n {
                visit(i, j);
            }
        }
    } else {
        for _ in 0..max_pairs {
            let i = rng.below(n);
            let mut j = rng.below(n - 1);
            if j >= i {
                j += 1;
            }
            visit(i.min(j), i.max(j));
        }
    }
    if n_diff == 0 {
        return Err(Error::DegenerateTrials("feature analytics needs at least two identities".into()));
    }
    let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    Ok(FeatureStats {
        orthogonality: mean(abs_diff, n_diff),
        same_sim: mean(same, n_same),
        diff_sim: mean(diff, n_diff),
        n_same,
        n_diff,
    })
}

/// Fused embeddings for every face instance of `subset`, each paired with a
/// voice instance of the same identity (the k-th face takes the k-th voice,
/// cycling). Returns the embeddings and an identity index per row.
pub fn fused_embeddings<T: Scalar>(
    params: &FopParams<T>,
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    labels: &LabelTable,
    subset: Subset,
) -> Result<(Matrix<f64>, Vec<usize>)> {
    let mut voices_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in labels.subset_indices(voices, subset)? {
        voices_of
            .entry(labels.identity_of(voices.id(i)).expect("checked"))
            .or_default()
            .push(i);
    }
    let index: BTreeMap<&str, usize> = voices_of.keys().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut fi, mut vi, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for i in labels.subset_indices(faces, subset)? {
        let id = labels.identity_of(faces.id(i)).expect("checked");
        let Some(pool) = voices_of.get(id) else { continue };
        let k = seen.entry(id).or_insert(0);
        fi.push(i);
        vi.push(pool[*k % pool.len()]);
        ids.push(index[id]);
        *k += 1;
    }
    if fi.is_empty() {
        return Err(Error::DegenerateTrials("no paired instances in subset".into()));
    }
    let cache = params.forward(&faces.vectors().select_rows(&fi).cast(), &voices.vectors().select_rows(&vi).cast())?;
    Ok((cache.fused.cast(), ids))
}

/// Orthogonality and similarity statistics of fused test embeddings.
pub fn feature_analytics<T: Scalar>(
    params: &FopParams<T>,
    faces: &EmbeddingBank,
    voices: &EmbeddingBank,
    labels: &LabelTable,
    subset: Subset,
    max_pairs: usize,
    rng: &mut Rng,
) -> Result<FeatureStats> {
    let (l, ids) = fused_embeddings(params, faces, voices, labels, subset)?;
    pair_stats(&l, &ids, max_pairs, rng)
}
