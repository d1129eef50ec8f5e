use super::Scalar;

/// Norm floor used when normalizing; guards the zero vector.
pub const NORM_EPS: f64 = 1e-12;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

#[inline]
pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// `v / max(‖v‖₂, eps)`.
pub fn l2_normalize<T: Scalar>(v: &[T], eps: T) -> Vec<T> {
    let n = norm(v).max(eps);
    v.iter().map(|&x| x / n).collect()
}

/// Cosine similarity with eps-guarded norms, clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let eps = T::lit(NORM_EPS);
    let c = dot(a, b) / (norm(a).max(eps) * norm(b).max(eps));
    c.max(-T::one()).min(T::one())
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    // Branch on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn tanh<T: Scalar>(x: T) -> T {
    x.tanh()
}

pub fn hadamard<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&x| (x - m).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use num::{BigInt, BigRational, ToPrimitive};
    use proptest::prelude::*;

    fn exact(x: f64) -> BigRational {
        BigRational::from_float(x).unwrap()
    }

    /// Cosine via exact rational dot products; only the final sqrt rounds.
    fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
        let dot: BigRational = a.iter().zip(b).map(|(&x, &y)| exact(x) * exact(y)).sum();
        let na: BigRational = a.iter().map(|&x| exact(x) * exact(x)).sum();
        let nb: BigRational = b.iter().map(|&x| exact(x) * exact(x)).sum();
        let sq = (&dot * &dot / (na * nb)).to_f64().unwrap();
        let sign = if dot < BigRational::from_integer(BigInt::from(0)) { -1.0 } else { 1.0 };
        sign * sq.sqrt()
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(l2_normalize(&[3.0, 4.0], 1e-12), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 0.0], 1e-12), vec![0.0, 0.0]);
        let mut rng = Rng::new(11);
        let v: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let n = l2_normalize(&v, NORM_EPS);
        assert!((norm(&n) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[2.0, 0.0], &[5.0, 0.0]), 1.0);
        let mut rng = Rng::new(12);
        for _ in 0..200 {
            let a: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
            assert!((cosine(&a, &b) - cosine_oracle(&a, &b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn elementwise_cases() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0_f64).is_finite() && sigmoid(800.0_f64) == 1.0);
        let s = softmax(&[0.3; 10]);
        assert!(s.iter().all(|&p| (p - 0.1f64).abs() < 1e-15));
        let x = [0.1, -2.0, 3.5, 0.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 123.0).collect();
        for (p, q) in softmax(&x).iter().zip(softmax(&shifted)) {
            assert!((p - q).abs() <= 1e-12);
        }
        assert_eq!(hadamard(&[1.0, 2.0], &[3.0, -1.0]), vec![3.0, -2.0]);
        assert!(softmax(&[1000.0, -1000.0]).iter().all(|p: &f64| p.is_finite()));
    }

    #[test]
    fn fuzz_outputs_finite() {
        let mut rng = Rng::new(99);
        for _ in 0..10_000 {
            let n = 1 + rng.below(8);
            let scale = 10f64.powi(rng.below(12) as i32 - 4);
            let a: Vec<f64> = (0..n).map(|_| rng.normal() * scale).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.normal() * scale).collect();
            assert!(cosine(&a, &b).is_finite());
            assert!(l2_normalize(&a, NORM_EPS).iter().all(|x| x.is_finite()));
            assert!(softmax(&a).iter().all(|x| x.is_finite()));
            assert!(a.iter().all(|&x| sigmoid(x).is_finite() && tanh(x).is_finite()));
        }
    }

    proptest! {
        #[test]
        fn normalize_idempotent(v in prop::collection::vec(-1e3f64..1e3, 1..32)) {
            let once = l2_normalize(&v, NORM_EPS);
            let twice = l2_normalize(&once, NORM_EPS);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn cosine_scale_invariant(
            ab in prop::collection::vec((-10f64..10.0, -10f64..10.0), 2..24),
            s in 1e-3f64..1e3,
            t in 1e-3f64..1e3,
        ) {
            let a: Vec<f64> = ab.iter().map(|p| p.0).collect();
            let b: Vec<f64> = ab.iter().map(|p| p.1).collect();
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let sa: Vec<f64> = a.iter().map(|x| x * s).collect();
            let tb: Vec<f64> = b.iter().map(|x| x * t).collect();
            let c = cosine(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((c - cosine(&sa, &tb)).abs() <= 1e-12);
        }
    }
}
