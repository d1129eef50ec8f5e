use super::{check_labels, squared_distance, LossOutput, LossTerms};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct CenterOutput<T> {
    pub loss: LossOutput<T>,
    /// Centers after this batch's update; not differentiated through.
    pub centers: Matrix<T>,
}

fn check<T: Scalar>(op: &'static str, fused: &Matrix<T>, labels: &[usize], centers: &Matrix<T>) -> Result<()> {
    if fused.rows() == 0 {
        return Err(Error::contract(op, "empty batch"));
    }
    if fused.cols() != centers.cols() {
        return Err(Error::Shape {
            op,
            left: fused.shape(),
            right: centers.shape(),
        });
    }
    check_labels(op, labels, fused.rows(), centers.rows())
}

/// Per-class mini-batch update: `c_j ← c_j − λ Σ_{y_i=j}(c_j − l_i) / (1 + n_j)`.
fn update_centers<T: Scalar>(fused: &Matrix<T>, labels: &[usize], centers: &Matrix<T>, rate: T) -> Matrix<T> {
    let mut delta = Matrix::zeros(centers.rows(), centers.cols());
    let mut counts = vec![0usize; centers.rows()];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (k, &x) in fused.row(i).iter().enumerate() {
            delta.set(y, k, delta.get(y, k) + centers.get(y, k) - x);
        }
    }
    let mut out = centers.clone();
    for (j, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let denom = T::one() + T::lit(n as f64);
        for k in 0..centers.cols() {
            out.set(j, k, centers.get(j, k) - rate * delta.get(j, k) / denom);
        }
    }
    out
}

/// `½ mean_i ‖l_i − c_{y_i}‖²` with centers held fixed for the gradient.
/// Gradients: `[d fused]`.
pub fn center_loss<T: Scalar>(fused: &Matrix<T>, labels: &[usize], centers: &Matrix<T>, lambda_c: T) -> Result<CenterOutput<T>> {
    check("center_loss", fused, labels, centers)?;
    let b = fused.rows();
    let inv_b = T::one() / T::lit(b as f64);
    let mut grad = Matrix::zeros(b, fused.cols());
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        total = total + squared_distance(fused.row(i), centers.row(y));
        for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (fused.get(i, k) - centers.get(y, k)) * inv_b;
        }
    }
    let value = T::lit(0.5) * total * inv_b;
    Ok(CenterOutput {
        loss: LossOutput {
            value,
            grads: vec![grad],
            terms: LossTerms {
                aux: value,
                ..LossTerms::default()
            },
        },
        centers: update_centers(fused, labels, centers, lambda_c),
    })
}

/// Center loss plus `λ_g · mean_{i, j ≠ y_i} 1 / (1 + ‖l_i − c_j‖²)`, which
/// pushes instances away from foreign centers. Gradients: `[d fused]`.
pub fn git_loss<T: Scalar>(
    fused: &Matrix<T>,
    labels: &[usize],
    centers: &Matrix<T>,
    lambda_c: T,
    lambda_g: T,
) -> Result<CenterOutput<T>> {
    let mut out = center_loss(fused, labels, centers, lambda_c)?;
    let (b, d) = fused.shape();
    let c = centers.rows();
    let pairs = b * (c - 1);
    if pairs == 0 {
        return Ok(out);
    }
    let scale = lambda_g / T::lit(pairs as f64);
    let two = T::lit(2.0);
    let grad = &mut out.loss.grads[0];
    let mut push = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        for j in (0..c).filter(|&j| j != y) {
            let inv = T::one() / (T::one() + squared_distance(fused.row(i), centers.row(j)));
            push = push + inv;
            let coef = -two * inv * inv * scale;
            for k in 0..d {
                let g = grad.get(i, k) + coef * (fused.get(i, k) - centers.get(j, k));
                grad.set(i, k, g);
            }
        }
    }
    let push = push * scale;
    out.loss.value = out.loss.value + push;
    out.loss.terms.aux = out.loss.value;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn on_center_is_zero() {
        let centers = Matrix::from_vec(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let fused = centers.select_rows(&[0, 1, 1]);
        let out = center_loss(&fused, &[0, 1, 1], &centers, 0.5).unwrap();
        assert_eq!(out.loss.value, 0.0);
        assert_eq!(out.centers, centers);
    }

    #[test]
    fn single_instance_at_unit_distance() {
        let out = center_loss(
            &Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
            &[0],
            &Matrix::zeros(1, 2),
            0.5,
        )
        .unwrap();
        assert_eq!(out.loss.value, 0.5);
    }

    #[test]
    fn update_matches_class_mean_delta() {
        let fused = Matrix::<f64>::from_vec(3, 2, vec![1.0, 0.0, 3.0, 2.0, -1.0, 1.0]).unwrap();
        let centers = Matrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = center_loss(&fused, &[0, 0, 1], &centers, 0.5).unwrap();
        // Class 0: delta = ((0−1)+(0−3), (0−0)+(0−2)) / 3 = (−4/3, −2/3).
        let c0 = [0.0 + 0.5 * 4.0 / 3.0, 0.0 + 0.5 * 2.0 / 3.0];
        // Class 1: delta = ((1+1), (1−1)) / 2 = (1, 0).
        let c1 = [1.0 - 0.5, 1.0];
        for (got, want) in out.centers.data().iter().zip(c0.iter().chain(&c1)) {
            assert!((got - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn git_single_class_equals_center() {
        let centers = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        let fused = centers.select_rows(&[0, 0]);
        let g = git_loss(&fused, &[0, 0], &centers, 0.5, 1.0).unwrap();
        assert_eq!(g.loss.value, 0.0);
    }

    #[test]
    fn git_push_vanishes_far_away() {
        let centers = Matrix::from_vec(2, 2, vec![0.0, 0.0, 1e8, 1e8]).unwrap();
        let fused = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let g = git_loss(&fused, &[0], &centers, 0.5, 1.0).unwrap();
        assert!(g.loss.value < 1e-15);
    }

    #[test]
    fn git_two_class_direct_formula() {
        let fused = Matrix::<f64>::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let centers = Matrix::from_vec(2, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = git_loss(&fused, &[0, 1], &centers, 0.5, 0.2).unwrap();
        // Pull: ½·(1 + 1)/2 = 0.5. Push pairs: ‖(1,0)−(0,1)‖² = 2, ‖(0,2)−(0,0)‖² = 4.
        let expect = 0.5 + 0.2 * (1.0 / 3.0 + 1.0 / 5.0) / 2.0;
        assert!((out.loss.value - expect).abs() <= 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(51);
        let fused = Matrix::from_fn(6, 4, |_, _| rng.normal());
        let centers = Matrix::from_fn(3, 4, |_, _| rng.normal() * 0.5);
        let labels = [0, 1, 2, 0, 1, 1];
        let f = |x: &Matrix<f64>| git_loss(x, &labels, &centers, 0.5, 0.3).unwrap().loss.value;
        let ana = git_loss(&fused, &labels, &centers, 0.5, 0.3).unwrap().loss.grads[0].clone();
        for idx in 0..fused.data().len() {
            let h = 1e-5 * fused.data()[idx].abs().max(1.0);
            let (mut p, mut m) = (fused.clone(), fused.clone());
            p.data_mut()[idx] += h;
            m.data_mut()[idx] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            let a = ana.data()[idx];
            assert!((num - a).abs() / num.abs().max(a.abs()).max(1e-6) <= 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(center_loss(&Matrix::<f64>::zeros(2, 3), &[0, 0], &Matrix::zeros(1, 2), 0.5).is_err());
        assert!(center_loss(&Matrix::<f64>::zeros(2, 2), &[0, 4], &Matrix::zeros(1, 2), 0.5).is_err());
    }
}
