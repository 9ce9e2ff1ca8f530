use crate::error::{Error, Result};
use crate::linalg::dot;

fn norms(u: &[f64], v: &[f64], epsilon: f64) -> Result<(f64, f64, f64)> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let eps2 = epsilon * epsilon;
    let (su, sv) = (dot(u, u).max(eps2), dot(v, v).max(eps2));
    // sqrt(su * sv) keeps cos(u, u) == 1 exactly: sqrt(fl(s * s)) == s.
    let mut denom = (su * sv).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        denom = su.sqrt() * sv.sqrt();
    }
    Ok((dot(u, v), su, denom))
}

/// `u.v / (max(|u|, eps) * max(|v|, eps))`.
pub fn cosine_similarity(u: &[f64], v: &[f64], epsilon: f64) -> Result<f64> {
    let (d, _, denom) = norms(u, v, epsilon)?;
    Ok(d / denom)
}

/// Similarity and its gradients with respect to `u` and `v`.
///
/// Where a norm is clamped to `epsilon` the clamp is constant, so only the
/// numerator contributes.
pub fn cosine_similarity_grad(
    u: &[f64],
    v: &[f64],
    epsilon: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (_, _, denom) = norms(u, v, epsilon)?;
    let s = dot(u, v) / denom;
    let eps2 = epsilon * epsilon;
    let grad = |x: &[f64], y: &[f64]| -> Vec<f64> {
        let sx = dot(x, x);
        let self_term = if sx > eps2 { s / sx } else { 0.0 };
        x.iter()
            .zip(y)
            .map(|(xi, yi)| yi / denom - self_term * xi)
            .collect()
    };
    Ok((s, grad(u, v), grad(v, u)))
}

/// Squared error against the pair target: `((s - t)^2, 2 (s - t))`.
pub fn siamese_loss(sim: f64, target: f64) -> (f64, f64) {
    let r = sim - target;
    (r * r, 2.0 * r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cases() {
        assert_eq!(
            cosine_similarity(&[1.0, 0.0], &[1.0, 0.0], 1e-12).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_similarity(&[1.0, 0.0], &[0.0, 1.0], 1e-12).unwrap(),
            0.0
        );
        assert_eq!(
            cosine_similarity(&[1.0, 0.0], &[-1.0, 0.0], 1e-12).unwrap(),
            -1.0
        );
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[3.0, 1.0], 1e-12).unwrap(),
            0.0
        );
        assert_eq!(cosine_similarity(&[0.0; 3], &[0.0; 3], 1e-12).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0], 1e-12).is_err());
    }

    #[test]
    fn loss_cases() {
        assert_eq!(siamese_loss(1.0, 1.0), (0.0, 0.0));
        assert_eq!(siamese_loss(0.0, 1.0), (1.0, -2.0));
        let (l, d) = siamese_loss(0.3, 0.0);
        assert!((l - 0.09).abs() < 1e-15 && (d - 0.6).abs() < 1e-15);
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        for v in [[0.1, 0.2, 0.3], [1e-3, -7.0, 2.5], [3.3, 3.3, -3.3]] {
            assert_eq!(cosine_similarity(&v, &v, 1e-12).unwrap(), 1.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let u = [0.3, -1.2, 0.7];
        let v = [1.1, 0.4, -0.5];
        let (_, du, dv) = cosine_similarity_grad(&u, &v, 1e-12).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let (mut up, mut um) = (u, u);
            up[i] += h;
            um[i] -= h;
            let num = (cosine_similarity(&up, &v, 1e-12).unwrap()
                - cosine_similarity(&um, &v, 1e-12).unwrap())
                / (2.0 * h);
            assert!((num - du[i]).abs() < 1e-8);
            let (mut vp, mut vm) = (v, v);
            vp[i] += h;
            vm[i] -= h;
            let num = (cosine_similarity(&u, &vp, 1e-12).unwrap()
                - cosine_similarity(&u, &vm, 1e-12).unwrap())
                / (2.0 * h);
            assert!((num - dv[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_vector_gradient_is_finite() {
        let (s, du, dv) = cosine_similarity_grad(&[0.0, 0.0], &[1.0, 2.0], 1e-12).unwrap();
        assert_eq!(s, 0.0);
        assert!(du.iter().chain(&dv).all(|g| g.is_finite()));
        assert_eq!(dv, vec![0.0, 0.0]);
    }

    proptest::proptest! {
        #[test]
        fn bounded(u in proptest::collection::vec(-1e3f64..1e3, 4), v in proptest::collection::vec(-1e3f64..1e3, 4)) {
            let s = cosine_similarity(&u, &v, 1e-12).unwrap();
            proptest::prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            let t = cosine_similarity(&v, &u, 1e-12).unwrap();
            proptest::prop_assert_eq!(s.to_bits(), t.to_bits());
        }
    }
}
