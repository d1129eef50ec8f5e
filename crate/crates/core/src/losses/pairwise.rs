//! Margin-based cross-modal losses. Distances are Euclidean.

use super::{check_labels, squared_distance, LossOutput, LossTerms};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Scalar};

/// Per-pair contrastive term and its derivative with respect to `a`
/// (the derivative with respect to `b` is the negation).
///
/// Positive pairs cost `‖a − b‖²`; negative pairs cost `max(0, m − ‖a − b‖)²`.
fn contrastive_pair<T: Scalar>(a: &[T], b: &[T], same: bool, margin: T, scale: T, ga: &mut [T], gb: &mut [T]) -> T {
    let two = T::lit(2.0);
    let sq = squared_distance(a, b);
    if same {
        for k in 0..a.len() {
            let g = two * (a[k] - b[k]) * scale;
            ga[k] = ga[k] + g;
            gb[k] = gb[k] - g;
        }
        return sq;
    }
    let dist = sq.sqrt();
    let gap = margin - dist;
    if gap <= T::zero() {
        return T::zero();
    }
    if dist > T::zero() {
        let coef = -two * gap / dist * scale;
        for k in 0..a.len() {
            let g = coef * (a[k] - b[k]);
            ga[k] = ga[k] + g;
            gb[k] = gb[k] - g;
        }
    }
    gap * gap
}

/// Contrastive loss over row-aligned pairs `(u_i, v_i)`, averaged.
/// Gradients: `[d u, d v]`.
pub fn contrastive_loss<T: Scalar>(u: &Matrix<T>, v: &Matrix<T>, same: &[bool], margin: T) -> Result<LossOutput<T>> {
    if u.shape() != v.shape() || same.len() != u.rows() || u.rows() == 0 {
        return Err(Error::contract(
            "contrastive_loss",
            format!("u {:?}, v {:?}, {} pair labels", u.shape(), v.shape(), same.len()),
        ));
    }
    let n = u.rows();
    let scale = T::one() / T::lit(n as f64);
    let mut du = Matrix::zeros(u.rows(), u.cols());
    let mut dv = Matrix::zeros(v.rows(), v.cols());
    let mut total = T::zero();
    for i in 0..n {
        let mut ga = du.row(i).to_vec();
        let mut gb = dv.row(i).to_vec();
        total = total + contrastive_pair(u.row(i), v.row(i), same[i], margin, scale, &mut ga, &mut gb);
        du.row_mut(i).copy_from_slice(&ga);
        dv.row_mut(i).copy_from_slice(&gb);
    }
    let n_same = same.iter().filter(|&&s| s).count();
    finish(total * scale, vec![du, dv], n_same, n - n_same)
}

/// Contrastive loss over every cross-modal pair `(u_i, v_j)`, with
/// `same = labels_i == labels_j`, averaged over all `n²` pairs.
/// Gradients: `[d u, d v]`.
pub fn contrastive_loss_all<T: Scalar>(u: &Matrix<T>, v: &Matrix<T>, labels: &[usize], margin: T) -> Result<LossOutput<T>> {
    if u.shape() != v.shape() || u.rows() == 0 {
        return Err(Error::Shape {
            op: "contrastive_loss_all",
            left: u.shape(),
            right: v.shape(),
        });
    }
    check_labels("contrastive_loss_all", labels, u.rows(), usize::MAX)?;
    let n = u.rows();
    let d = u.cols();
    let scale = T::one() / T::lit((n * n) as f64);
    let mut du = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    let mut total = T::zero();
    let mut n_same = 0;
    let mut gb = vec![T::zero(); d];
    for i in 0..n {
        let mut ga = du.row(i).to_vec();
        for j in 0..n {
            let same = labels[i] == labels[j];
            n_same += usize::from(same);
            gb.copy_from_slice(dv.row(j));
            total = total + contrastive_pair(u.row(i), v.row(j), same, margin, scale, &mut ga, &mut gb);
            dv.row_mut(j).copy_from_slice(&gb);
        }
        du.row_mut(i).copy_from_slice(&ga);
    }
    finish(total * scale, vec![du, dv], n_same, n * n - n_same)
}

/// Adds the gradient of `max(0, ‖a − p‖ − ‖a − n‖ + m)` (scaled) and
/// returns the hinge value.
fn triplet_term<T: Scalar>(a: &[T], p: &[T], n: &[T], margin: T, scale: T, ga: &mut [T], gp: &mut [T], gn: &mut [T]) -> T {
    let dp = squared_distance(a, p).sqrt();
    let dn = squared_distance(a, n).sqrt();
    let hinge = dp - dn + margin;
    if hinge <= T::zero() {
        return T::zero();
    }
    let cp = if dp > T::zero() { scale / dp } else { T::zero() };
    let cn = if dn > T::zero() { scale / dn } else { T::zero() };
    for k in 0..a.len() {
        let gap = (a[k] - p[k]) * cp;
        let gan = (a[k] - n[k]) * cn;
        ga[k] = ga[k] + gap - gan;
        gp[k] = gp[k] - gap;
        gn[k] = gn[k] + gan;
    }
    hinge
}

/// Mean triplet hinge over row-aligned triplets.
/// Gradients: `[d anchors, d positives, d negatives]`.
pub fn triplet_loss<T: Scalar>(
    anchors: &Matrix<T>,
    positives: &Matrix<T>,
    negatives: &Matrix<T>,
    margin: T,
) -> Result<LossOutput<T>> {
    if anchors.shape() != positives.shape() || anchors.shape() != negatives.shape() || anchors.rows() == 0 {
        return Err(Error::Shape {
            op: "triplet_loss",
            left: anchors.shape(),
            right: if anchors.shape() != positives.shape() { positives.shape() } else { negatives.shape() },
        });
    }
    let (t, d) = anchors.shape();
    let scale = T::one() / T::lit(t as f64);
    let mut grads = [Matrix::zeros(t, d), Matrix::zeros(t, d), Matrix::zeros(t, d)];
    let mut total = T::zero();
    for i in 0..t {
        let mut ga = vec![T::zero(); d];
        let mut gp = vec![T::zero(); d];
        let mut gn = vec![T::zero(); d];
        total = total
            + triplet_term(anchors.row(i), positives.row(i), negatives.row(i), margin, scale, &mut ga, &mut gp, &mut gn);
        grads[0].row_mut(i).copy_from_slice(&ga);
        grads[1].row_mut(i).copy_from_slice(&gp);
        grads[2].row_mut(i).copy_from_slice(&gn);
    }
    finish(total * scale, grads.into(), t, t)
}

/// Mean triplet hinge over every `(anchor i, positive j, negative k)` with
/// `labels_j == labels_i != labels_k`; anchors come from one modality and
/// positives/negatives from the other. Cubic in the number of rows.
/// Gradients: `[d anchors, d others]`.
pub fn triplet_loss_all<T: Scalar>(anchors: &Matrix<T>, others: &Matrix<T>, labels: &[usize], margin: T) -> Result<LossOutput<T>> {
    if anchors.shape() != others.shape() || anchors.rows() == 0 {
        return Err(Error::Shape {
            op: "triplet_loss_all",
            left: anchors.shape(),
            right: others.shape(),
        });
    }
    check_labels("triplet_loss_all", labels, anchors.rows(), usize::MAX)?;
    let (n, d) = anchors.shape();
    let mut count = 0usize;
    for i in 0..n {
        let pos = labels.iter().filter(|&&y| y == labels[i]).count();
        count += pos * (n - pos);
    }
    if count == 0 {
        return finish(T::zero(), vec![Matrix::zeros(n, d), Matrix::zeros(n, d)], 0, 0);
    }
    let scale = T::one() / T::lit(count as f64);
    let mut da = Matrix::zeros(n, d);
    let mut dother = Matrix::zeros(n, d);
    let mut total = T::zero();
    let mut gp = vec![T::zero(); d];
    let mut gn = vec![T::zero(); d];
    for i in 0..n {
        let mut ga = da.row(i).to_vec();
        for j in (0..n).filter(|&j| labels[j] == labels[i]) {
            gp.copy_from_slice(dother.row(j));
            for k in (0..n).filter(|&k| labels[k] != labels[i]) {
                gn.copy_from_slice(dother.row(k));
                total = total
                    + triplet_term(anchors.row(i), others.row(j), others.row(k), margin, scale, &mut ga, &mut gp, &mut gn);
                dother.row_mut(k).copy_from_slice(&gn);
            }
            dother.row_mut(j).copy_from_slice(&gp);
        }
        da.row_mut(i).copy_from_slice(&ga);
    }
    finish(total * scale, vec![da, dother], count, count)
}

fn finish<T: Scalar>(value: T, grads: Vec<Matrix<T>>, n_same: usize, n_diff: usize) -> Result<LossOutput<T>> {
    Ok(LossOutput {
        value,
        grads,
        terms: LossTerms {
            aux: value,
            n_same,
            n_diff,
            ..LossTerms::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.normal() * 0.4)
    }

    fn check_grad(x: &Matrix<f64>, ana: &Matrix<f64>, f: impl Fn(&Matrix<f64>) -> f64) {
        for idx in 0..x.data().len() {
            let h = 1e-5 * x.data()[idx].abs().max(1.0);
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[idx] += h;
            m.data_mut()[idx] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            let a = ana.data()[idx];
            assert!((num - a).abs() / num.abs().max(a.abs()).max(1e-6) <= 1e-5, "{num} vs {a}");
        }
    }

    #[test]
    fn contrastive_trivial_cases() {
        let u = Matrix::from_vec(1, 2, vec![0.3, 0.4]).unwrap();
        assert_eq!(contrastive_loss(&u, &u, &[true], 0.5).unwrap().value, 0.0);
        let v = Matrix::from_vec(1, 2, vec![0.3, -0.4]).unwrap();
        assert_eq!(contrastive_loss(&u, &v, &[false], 0.5).unwrap().value, 0.0);
        let out = contrastive_loss(&u, &u, &[false], 0.5).unwrap();
        assert_eq!(out.value, 0.25);
    }

    #[test]
    fn contrastive_all_matches_enumeration() {
        let mut rng = Rng::new(31);
        let u = random(&mut rng, 4, 3);
        let v = random(&mut rng, 4, 3);
        let labels = [0, 1, 0, 2];
        let mut expect = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let d = dist(u.row(i), v.row(j));
                expect += if labels[i] == labels[j] { d * d } else { (0.5f64 - d).max(0.0).powi(2) };
            }
        }
        expect /= 16.0;
        let out = contrastive_loss_all(&u, &v, &labels, 0.5).unwrap();
        assert!((out.value - expect).abs() <= 1e-14);
        check_grad(&u, &out.grads[0], |x| contrastive_loss_all(x, &v, &labels, 0.5).unwrap().value);
        check_grad(&v, &out.grads[1], |x| contrastive_loss_all(&u, x, &labels, 0.5).unwrap().value);
        let same = [true, false, false, true];
        let paired = contrastive_loss(&u, &v, &same, 0.5).unwrap();
        check_grad(&u, &paired.grads[0], |x| contrastive_loss(x, &v, &same, 0.5).unwrap().value);
        check_grad(&v, &paired.grads[1], |x| contrastive_loss(&u, x, &same, 0.5).unwrap().value);
    }

    #[test]
    fn triplet_trivial_cases() {
        let a = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let far = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(triplet_loss(&a, &a, &far, 0.3).unwrap().value, 0.0);
        let out = triplet_loss(&a, &a, &a, 0.3).unwrap();
        assert_eq!(out.value, 0.3);
        assert!(out.grads.iter().all(|g| g.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn triplet_matches_direct_formula() {
        let mut rng = Rng::new(37);
        let a = random(&mut rng, 3, 4);
        let p = random(&mut rng, 3, 4);
        let n = random(&mut rng, 3, 4);
        let expect: f64 = (0..3)
            .map(|i| (dist(a.row(i), p.row(i)) - dist(a.row(i), n.row(i)) + 0.3).max(0.0))
            .sum::<f64>()
            / 3.0;
        let out = triplet_loss(&a, &p, &n, 0.3).unwrap();
        assert!((out.value - expect).abs() <= 1e-14);
        check_grad(&a, &out.grads[0], |x| triplet_loss(x, &p, &n, 0.3).unwrap().value);
        check_grad(&p, &out.grads[1], |x| triplet_loss(&a, x, &n, 0.3).unwrap().value);
        check_grad(&n, &out.grads[2], |x| triplet_loss(&a, &p, x, 0.3).unwrap().value);
    }

    #[test]
    fn triplet_all_matches_enumeration() {
        let mut rng = Rng::new(41);
        let a = random(&mut rng, 6, 3);
        let o = random(&mut rng, 6, 3);
        let labels = [0, 1, 2, 0, 1, 1];
        let (mut total, mut count) = (0.0, 0);
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    if labels[j] == labels[i] && labels[k] != labels[i] {
                        total += (dist(a.row(i), o.row(j)) - dist(a.row(i), o.row(k)) + 0.3).max(0.0);
                        count += 1;
                    }
                }
            }
        }
        let out = triplet_loss_all(&a, &o, &labels, 0.3).unwrap();
        assert!((out.value - total / count as f64).abs() <= 1e-14);
        check_grad(&a, &out.grads[0], |x| triplet_loss_all(x, &o, &labels, 0.3).unwrap().value);
        check_grad(&o, &out.grads[1], |x| triplet_loss_all(&a, x, &labels, 0.3).unwrap().value);
    }

    #[test]
    fn permuting_rows_keeps_values() {
        let mut rng = Rng::new(43);
        let a = random(&mut rng, 5, 3);
        let o = random(&mut rng, 5, 3);
        let labels = [0, 1, 0, 2, 1];
        let perm = [3, 0, 4, 1, 2];
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let (ap, op) = (a.select_rows(&perm), o.select_rows(&perm));
        let t1 = triplet_loss_all(&a, &o, &labels, 0.3).unwrap().value;
        let t2 = triplet_loss_all(&ap, &op, &lp, 0.3).unwrap().value;
        assert!((t1 - t2).abs() <= 1e-12);
        let c1 = contrastive_loss_all(&a, &o, &labels, 0.5).unwrap().value;
        let c2 = contrastive_loss_all(&ap, &op, &lp, 0.5).unwrap().value;
        assert!((c1 - c2).abs() <= 1e-12);
    }
}
