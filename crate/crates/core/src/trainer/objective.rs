use super::backward::{backward, HeadGrads};
use crate::error::{Error, Result};
use crate::fopmodel::FopParams;
use crate::losses::{
    center_loss, contrastive_loss, git_loss, joint_loss, oc_loss, triplet_loss, LossKind, LossTerms, OcReduction,
};
use crate::numcore::{Matrix, Rng, Scalar};

/// Loss selection and hyperparameters, independent of the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub alpha: f64,
    pub oc_reduction: OcReduction,
    pub contrastive_margin: f64,
    pub triplet_margin: f64,
    pub lambda_c: f64,
    pub lambda_g: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Joint,
            alpha: 1.0,
            oc_reduction: OcReduction::Mean,
            contrastive_margin: 0.5,
            triplet_margin: 0.3,
            lambda_c: 0.5,
            lambda_g: 0.1,
        }
    }
}

/// One mini-batch of paired face/voice inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub faces: Matrix<T>,
    pub voices: Matrix<T>,
    pub labels: Vec<usize>,
    /// For each row, an in-batch row of a different identity whose voice
    /// serves as the negative for the pairwise losses.
    pub negatives: Vec<Option<usize>>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws, for each row, a uniformly chosen row with a different label.
pub fn sample_negatives(labels: &[usize], rng: &mut Rng) -> Vec<Option<usize>> {
    labels
        .iter()
        .map(|&y| {
            let pool: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != y).collect();
            (!pool.is_empty()).then(|| *rng.choose(&pool))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<T> {
    pub value: T,
    pub terms: LossTerms<T>,
    pub grads: FopParams<T>,
    /// Centers after this batch's update, for the center-based losses.
    pub centers: Option<Matrix<T>>,
}

/// Rows `i` with a negative, and the negatives themselves.
fn negative_pairs(negatives: &[Option<usize>]) -> (Vec<usize>, Vec<usize>) {
    negatives.iter().enumerate().filter_map(|(i, n)| n.map(|j| (i, j))).unzip()
}

fn scatter_add<T: Scalar>(dst: &mut Matrix<T>, rows: &[usize], src: &Matrix<T>) {
    for (r, &i) in rows.iter().enumerate() {
        for (d, &s) in dst.row_mut(i).iter_mut().zip(src.row(r)) {
            *d = *d + s;
        }
    }
}

/// Forward pass, loss and parameter gradients for one batch.
///
/// Cross-entropy and the orthogonality term are always reported in `terms`
/// (the latter when the batch has two or more rows), whether or not they
/// drive the gradient. `centers` is required by the center and Git losses.
pub fn batch_objective<T: Scalar>(
    params: &FopParams<T>,
    batch: &Batch<T>,
    cfg: &LossConfig,
    centers: Option<&Matrix<T>>,
) -> Result<StepOutput<T>> {
    let cache = params.forward(&batch.faces, &batch.voices)?;
    let labels = &batch.labels;
    let b = batch.len();
    let reduction = cfg.oc_reduction;
    let diag = joint_loss(&cache.logits, &cache.fused, labels, T::zero(), reduction)?;
    let mut terms = diag.terms.clone();
    let mut grads = HeadGrads::default();
    let mut new_centers = None;
    let need_centers = || centers.ok_or_else(|| Error::contract("batch_objective", format!("{} loss needs centers", cfg.kind)));

    let value = match cfg.kind {
        LossKind::Ce => {
            grads.logits = Some(diag.grads[0].clone());
            diag.value
        }
        LossKind::Joint => {
            let out = joint_loss(&cache.logits, &cache.fused, labels, T::lit(cfg.alpha), reduction)?;
            let [dlogits, dfused] = <[Matrix<T>; 2]>::try_from(out.grads).expect("two gradients");
            grads.logits = Some(dlogits);
            grads.fused = Some(dfused);
            out.value
        }
        LossKind::Oc => {
            let out = oc_loss(&cache.fused, labels, reduction)?;
            grads.fused = out.grads.into_iter().next();
            out.value
        }
        LossKind::Center | LossKind::Git => {
            let c = need_centers()?;
            let lc = T::lit(cfg.lambda_c);
            let out = if cfg.kind == LossKind::Center {
                center_loss(&cache.fused, labels, c, lc)?
            } else {
                git_loss(&cache.fused, labels, c, lc, T::lit(cfg.lambda_g))?
            };
            terms.aux = out.loss.value;
            grads.logits = Some(diag.grads[0].clone());
            grads.fused = out.loss.grads.into_iter().next();
            new_centers = Some(out.centers);
            diag.value + out.loss.value
        }
        LossKind::Contrastive => {
            let (rows, negs) = negative_pairs(&batch.negatives);
            let u = cache.u.clone();
            let v = cache.v.clone();
            let uu = if rows.is_empty() { u.clone() } else { u.vstack(&u.select_rows(&rows))? };
            let vv = if rows.is_empty() { v.clone() } else { v.vstack(&v.select_rows(&negs))? };
            let mut same = vec![true; b];
            same.extend(std::iter::repeat_n(false, rows.len()));
            let out = contrastive_loss(&uu, &vv, &same, T::lit(cfg.contrastive_margin))?;
            let [duu, dvv] = <[Matrix<T>; 2]>::try_from(out.grads).expect("two gradients");
            let all: Vec<usize> = (0..b).collect();
            let extra: Vec<usize> = (b..b + rows.len()).collect();
            let mut du = duu.select_rows(&all);
            let mut dv = dvv.select_rows(&all);
            scatter_add(&mut du, &rows, &duu.select_rows(&extra));
            scatter_add(&mut dv, &negs, &dvv.select_rows(&extra));
            grads.u = Some(du);
            grads.v = Some(dv);
            terms.aux = out.value;
            out.value
        }
        LossKind::Triplet => {
            let (rows, negs) = negative_pairs(&batch.negatives);
            if rows.is_empty() {
                terms.aux = T::zero();
                T::zero()
            } else {
                let out = triplet_loss(
                    &cache.u.select_rows(&rows),
                    &cache.v.select_rows(&rows),
                    &cache.v.select_rows(&negs),
                    T::lit(cfg.triplet_margin),
                )?;
                let [da, dp, dn] = <[Matrix<T>; 3]>::try_from(out.grads).expect("three gradients");
                let d = cache.u.cols();
                let mut du = Matrix::zeros(b, d);
                let mut dv = Matrix::zeros(b, d);
                scatter_add(&mut du, &rows, &da);
                scatter_add(&mut dv, &rows, &dp);
                scatter_add(&mut dv, &negs, &dn);
                grads.u = Some(du);
                grads.v = Some(dv);
                terms.aux = out.value;
                out.value
            }
        }
    };
    Ok(StepOutput {
        value,
        terms,
        grads: backward(params, &cache, &grads)?,
        centers: new_centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fopmodel::{Fusion, InitScheme, ModelDims};
    use crate::losses::ce_loss;

    fn toy(seed: u64) -> (FopParams<f64>, Batch<f64>, Matrix<f64>) {
        let mut rng = Rng::new(seed);
        let p = FopParams::init(ModelDims::new(5, 4, 8, 3), Fusion::Gated, InitScheme::XavierUniform, &mut rng);
        let labels = vec![0, 1, 2, 0, 1, 2];
        let batch = Batch {
            faces: Matrix::from_fn(6, 5, |_, _| rng.normal()),
            voices: Matrix::from_fn(6, 4, |_, _| rng.normal()),
            negatives: sample_negatives(&labels, &mut rng),
            labels,
        };
        let centers = Matrix::from_fn(3, 8, |_, _| 0.3 * rng.normal());
        (p, batch, centers)
    }

    #[test]
    fn negatives_have_other_labels() {
        let labels = [0, 0, 1, 2, 2, 2];
        let n = sample_negatives(&labels, &mut Rng::new(1));
        for (i, j) in n.iter().enumerate() {
            assert_ne!(labels[j.unwrap()], labels[i]);
        }
        assert_eq!(sample_negatives(&[4, 4], &mut Rng::new(1)), vec![None, None]);
    }

    #[test]
    fn ce_kind_reports_oc_and_matches_alpha_zero() {
        let (p, batch, _) = toy(1);
        let ce = batch_objective(&p, &batch, &LossConfig { kind: LossKind::Ce, ..Default::default() }, None).unwrap();
        let j0 = batch_objective(
            &p,
            &batch,
            &LossConfig {
                alpha: 0.0,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert_eq!(ce.value.to_bits(), j0.value.to_bits());
        assert_eq!(ce.grads, j0.grads);
        assert!(ce.terms.oc > 0.0);
        let logits = p.forward(&batch.faces, &batch.voices).unwrap().logits;
        assert_eq!(ce.value, ce_loss(&logits, &batch.labels).unwrap().value);
    }

    #[test]
    fn doubling_alpha_doubles_oc_component() {
        let (p, batch, _) = toy(2);
        let g = |alpha: f64| batch_objective(&p, &batch, &LossConfig { alpha, ..Default::default() }, None).unwrap().grads;
        let (g0, g1, g2) = (g(0.0), g(1.0), g(2.0));
        for (((_, a), (_, b)), (_, c)) in g0.tensors().iter().zip(g1.tensors()).zip(g2.tensors()) {
            for ((x0, x1), x2) in a.data().iter().zip(b.data()).zip(c.data()) {
                let (oc1, oc2) = (x1 - x0, x2 - x0);
                assert!((oc2 - 2.0 * oc1).abs() <= 1e-12 * (1.0 + oc1.abs()));
            }
        }
    }

    #[test]
    fn center_losses_need_centers() {
        let (p, batch, centers) = toy(3);
        let cfg = LossConfig {
            kind: LossKind::Git,
            ..Default::default()
        };
        assert!(batch_objective(&p, &batch, &cfg, None).is_err());
        let out = batch_objective(&p, &batch, &cfg, Some(&centers)).unwrap();
        assert_eq!(out.value, out.terms.ce + out.terms.aux);
        assert_ne!(out.centers.unwrap(), centers);
    }

    #[test]
    fn pairwise_losses_leave_classifier_untouched() {
        let (p, batch, _) = toy(4);
        for kind in [LossKind::Contrastive, LossKind::Triplet] {
            let out = batch_objective(&p, &batch, &LossConfig { kind, ..Default::default() }, None).unwrap();
            assert!(out.grads.classifier.data().iter().all(|&x| x == 0.0));
            assert!(out.grads.face.weight.data().iter().any(|&x| x != 0.0));
        }
    }
}
