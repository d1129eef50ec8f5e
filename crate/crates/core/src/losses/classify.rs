use super::{check_labels, oc_loss, LossOutput, LossTerms, OcReduction};
use crate::error::{Error, Result};
use crate::numcore::{softmax, Matrix, Scalar};

/// Mean softmax cross-entropy over the batch.
///
/// Gradient with respect to the logits is `(softmax − onehot) / B`.
pub fn ce_loss<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<LossOutput<T>> {
    let (b, c) = logits.shape();
    if b == 0 {
        return Err(Error::contract("ce_loss", "empty batch"));
    }
    check_labels("ce_loss", labels, b, c)?;
    let inv_b = T::one() / T::lit(b as f64);
    let mut grad = Matrix::zeros(b, c);
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let probs = softmax(row);
        // log-sum-exp form keeps saturated logits exact.
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
        total = total + (lse - row[y]);
        for (j, (g, p)) in grad.row_mut(i).iter_mut().zip(probs).enumerate() {
            let onehot = if j == y { T::one() } else { T::zero() };
            *g = (p - onehot) * inv_b;
        }
    }
    let value = total * inv_b;
    Ok(LossOutput {
        value,
        grads: vec![grad],
        terms: LossTerms {
            ce: value,
            ..LossTerms::default()
        },
    })
}

/// `CE + alpha · OC`. Gradients: `[d logits, d fused]`.
///
/// With `alpha == 0` the value and logit gradient are exactly those of
/// [`ce_loss`]; the orthogonality term is still reported in `terms.oc` when
/// the batch has at least two rows.
pub fn joint_loss<T: Scalar>(
    logits: &Matrix<T>,
    fused: &Matrix<T>,
    labels: &[usize],
    alpha: T,
    reduction: OcReduction,
) -> Result<LossOutput<T>> {
    if !(alpha >= T::zero()) {
        return Err(Error::contract("joint_loss", format!("alpha must be non-negative, got {alpha}")));
    }
    let ce = ce_loss(logits, labels)?;
    let oc = if fused.rows() >= 2 || alpha > T::zero() {
        Some(oc_loss(fused, labels, reduction)?)
    } else {
        None
    };
    let mut terms = LossTerms {
        ce: ce.value,
        ..LossTerms::default()
    };
    if let Some(oc) = &oc {
        terms.oc = oc.value;
        terms.n_same = oc.terms.n_same;
        terms.n_diff = oc.terms.n_diff;
    }
    let [dlogits] = <[Matrix<T>; 1]>::try_from(ce.grads).expect("ce has one gradient");
    if alpha == T::zero() {
        return Ok(LossOutput {
            value: ce.value,
            grads: vec![dlogits, Matrix::zeros(fused.rows(), fused.cols())],
            terms,
        });
    }
    let oc = oc.expect("computed when alpha > 0");
    let dfused = oc.grads[0].scale(alpha);
    Ok(LossOutput {
        value: ce.value + alpha * oc.value,
        grads: vec![dlogits, dfused],
        terms,
    })
}
