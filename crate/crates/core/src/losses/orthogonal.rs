use std::fmt;
use std::str::FromStr;

use super::{check_labels, LossOutput, LossTerms};
use crate::error::{Error, ParseErrorKind, Result};
use crate::numcore::{dot, norm, Matrix, Scalar, NORM_EPS};

/// How pair similarities are aggregated in the orthogonality constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OcReduction {
    /// `(1 − mean_S cos) + |mean_D cos|`; bounded in `[0, 3]`.
    Mean,
    /// `(1 − Σ_S cos) + |Σ_D cos|`; grows with batch size.
    Sum,
}

impl fmt::Display for OcReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OcReduction::Mean => "mean",
            OcReduction::Sum => "sum",
        })
    }
}

impl FromStr for OcReduction {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(OcReduction::Mean),
            "sum" => Ok(OcReduction::Sum),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

/// Orthogonality constraint on fused embeddings.
///
/// Same-identity pairs `i < j` are pulled to cosine 1; different-identity
/// pairs are pushed toward cosine 0 through the absolute value of their
/// aggregate. A missing pair kind contributes nothing. Gradients: `[d fused]`.
pub fn oc_loss<T: Scalar>(fused: &Matrix<T>, labels: &[usize], reduction: OcReduction) -> Result<LossOutput<T>> {
    let (b, d) = fused.shape();
    if b < 2 {
        return Err(Error::contract("oc_loss", format!("needs at least 2 rows, got {b}")));
    }
    check_labels("oc_loss", labels, b, usize::MAX)?;

    let eps = T::lit(NORM_EPS);
    let norms: Vec<T> = fused.iter_rows().map(|r| norm(r).max(eps)).collect();
    let unit = Matrix::from_fn(b, d, |i, j| fused.get(i, j) / norms[i]);

    let mut sum_same = T::zero();
    let mut sum_diff = T::zero();
    let (mut n_same, mut n_diff) = (0usize, 0usize);
    let mut cos = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            let c = dot(unit.row(i), unit.row(j));
            cos.set(i, j, c);
            if labels[i] == labels[j] {
                sum_same = sum_same + c;
                n_same += 1;
            } else {
                sum_diff = sum_diff + c;
                n_diff += 1;
            }
        }
    }

    let (same_agg, same_w, diff_agg, diff_w) = match reduction {
        OcReduction::Mean => (
            if n_same > 0 { sum_same / T::lit(n_same as f64) } else { T::zero() },
            if n_same > 0 { T::one() / T::lit(n_same as f64) } else { T::zero() },
            if n_diff > 0 { sum_diff / T::lit(n_diff as f64) } else { T::zero() },
            if n_diff > 0 { T::one() / T::lit(n_diff as f64) } else { T::zero() },
        ),
        OcReduction::Sum => (sum_same, T::one(), sum_diff, T::one()),
    };
    let pull = if n_same > 0 { T::one() - same_agg } else { T::zero() };
    let push = diff_agg.abs();
    let value = pull + push;

    // dL/dcos for each pair kind; sign(0) taken as 0.
    let same_coef = -same_w;
    let diff_coef = if diff_agg > T::zero() {
        diff_w
    } else if diff_agg < T::zero() {
        -diff_w
    } else {
        T::zero()
    };

    // g_i = Σ_j coef_ij · unit_j, then back through the row normalization.
    let mut g_unit = Matrix::zeros(b, d);
    for i in 0..b {
        for j in i + 1..b {
            let coef = if labels[i] == labels[j] { same_coef } else { diff_coef };
            if coef == T::zero() {
                continue;
            }
            for k in 0..d {
                let gi = g_unit.get(i, k) + coef * unit.get(j, k);
                let gj = g_unit.get(j, k) + coef * unit.get(i, k);
                g_unit.set(i, k, gi);
                g_unit.set(j, k, gj);
            }
        }
    }
    let mut grad = Matrix::zeros(b, d);
    for i in 0..b {
        let n = unit.row(i);
        let g = g_unit.row(i);
        let raw_norm = norm(fused.row(i));
        let out = grad.row_mut(i);
        if raw_norm >= eps {
            let proj = dot(n, g);
            for k in 0..d {
                out[k] = (g[k] - n[k] * proj) / raw_norm;
            }
        } else {
            for k in 0..d {
                out[k] = g[k] / eps;
            }
        }
    }

    Ok(LossOutput {
        value,
        grads: vec![grad],
        terms: LossTerms {
            oc: value,
            n_same,
            n_diff,
            ..LossTerms::default()
        },
    })
}
