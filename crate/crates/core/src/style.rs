//! Attribute-style manifolds on the unit sphere.
//!
//! Given `S` unit style directions `v_k` of one attribute, the dominant
//! direction `v*` is their top singular direction. Every `v_k` is pushed along
//! its ray onto the tangent plane `P = {x : <x, v*> = 1}`, giving `p_k`, and
//! the primitives are `u_k = p_k - v*`. New styles are points `v* + sum_k
//! lambda_k u_k` on `P`, normalized back onto the sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::direction::{estimate_dominant, unit_tolerance};
use crate::edit::apply_delta;
use crate::error::{Error, Result};
use crate::latent::{cosine_similarity, normalize, FlatVector, LatentCode, LayerMask};
use crate::scalar::Scalar;

/// Minimum `<v_k, v*>` accepted when fitting.
pub const MIN_STYLE_ALIGNMENT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StyleManifold<T: Scalar> {
    pub attribute: String,
    pub v_star: FlatVector<T>,
    pub styles: Vec<FlatVector<T>>,
    pub tangent_points: Vec<FlatVector<T>>,
    pub primitives: Vec<FlatVector<T>>,
    pub layer_mask: LayerMask,
}

impl<T: Scalar> StyleManifold<T> {
    pub fn len(&self) -> usize {
        self.styles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.styles.is_empty()
    }

    /// Re-check the geometric invariants at tolerance `tol`.
    pub fn validate_with(&self, tol: T) -> Result<()> {
        let fail = |reason: String| Error::InvariantViolation {
            name: self.attribute.clone(),
            reason,
        };
        let s = self.styles.len();
        if s < 2 || self.tangent_points.len() != s || self.primitives.len() != s {
            return Err(fail(format!(
                "{s} styles, {} tangent points, {} primitives",
                self.tangent_points.len(),
                self.primitives.len()
            )));
        }
        let dim = self.v_star.dim();
        let layers = self.layer_mask.layers();
        if layers == 0 || dim % layers != 0 {
            return Err(fail("v* length not divisible into mask layers".into()));
        }
        if (self.v_star.norm() - T::one()).abs() > tol {
            return Err(fail("v* is not unit length".into()));
        }
        for k in 0..s {
            let (v, p, u) = (&self.styles[k], &self.tangent_points[k], &self.primitives[k]);
            if v.dim() != dim || p.dim() != dim || u.dim() != dim {
                return Err(fail(format!("style {k} has wrong dimension")));
            }
            if (v.norm() - T::one()).abs() > tol {
                return Err(fail(format!("style {k} is not unit length")));
            }
            if (p.dot(&self.v_star)? - T::one()).abs() > tol {
                return Err(fail(format!("tangent point {k} is off the tangent plane")));
            }
            if u.dot(&self.v_star)?.abs() > tol {
                return Err(fail(format!("primitive {k} is not tangent")));
            }
            let expected = p.sub(&self.v_star)?;
            if expected.sub(u)?.norm() > tol {
                return Err(fail(format!("primitive {k} differs from p_k - v*")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(unit_tolerance::<T>())
    }
}

pub fn fit_manifold<T: Scalar>(
    attribute: &str,
    style_dirs: &[FlatVector<T>],
    layer_mask: LayerMask,
) -> Result<StyleManifold<T>> {
    if style_dirs.len() < 2 {
        return Err(Error::TooFewStyles(style_dirs.len()));
    }
    let styles: Vec<FlatVector<T>> = style_dirs.iter().map(normalize).collect::<Result<_>>()?;
    let dim = styles[0].dim();
    if layer_mask.layers() == 0 || dim % layer_mask.layers() != 0 {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} layers, direction length is {dim}",
            layer_mask.layers()
        )));
    }
    let v_star = estimate_dominant(&styles)?.direction;

    let mut tangent_points = Vec::with_capacity(styles.len());
    let mut primitives = Vec::with_capacity(styles.len());
    for (k, v) in styles.iter().enumerate() {
        let along = v.dot(&v_star)?;
        if along <= T::lit(MIN_STYLE_ALIGNMENT) {
            return Err(Error::NearOrthogonalStyle {
                index: k,
                cosine: along.to_f64().unwrap_or(f64::NAN),
            });
        }
        let p = v.scaled(T::one() / along);
        primitives.push(p.sub(&v_star)?);
        tangent_points.push(p);
    }

    Ok(StyleManifold {
        attribute: attribute.to_owned(),
        v_star,
        styles,
        tangent_points,
        primitives,
        layer_mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Tangent-plane offset from `v*`.
    Manifold,
    /// `b = v*`, only the strength varies.
    Strength,
    /// Convex combination of the tangent points.
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StyleSample<T: Scalar> {
    pub b: FlatVector<T>,
    pub lambdas: Vec<T>,
    pub alpha: T,
    /// Bound the lambdas were drawn under, when one applies.
    pub epsilon: Option<T>,
    pub kind: SampleKind,
}

fn check_lambdas<T: Scalar>(manifold: &StyleManifold<T>, lambdas: &[T]) -> Result<()> {
    if lambdas.len() != manifold.len() {
        return Err(Error::DimMismatch {
            expected: manifold.len(),
            got: lambdas.len(),
        });
    }
    Ok(())
}

fn offset_point<T: Scalar>(manifold: &StyleManifold<T>, lambdas: &[T]) -> Result<FlatVector<T>> {
    let mut point = manifold.v_star.clone();
    for (u, &l) in manifold.primitives.iter().zip(lambdas) {
        point.axpy(l, u)?;
    }
    normalize(&point)
}

/// `b = normalize(v* + sum_k lambda_k u_k)` with every `|lambda_k| < epsilon`.
pub fn sample_style<T: Scalar>(
    manifold: &StyleManifold<T>,
    lambdas: &[T],
    epsilon: T,
    alpha: T,
) -> Result<StyleSample<T>> {
    check_epsilon(epsilon)?;
    check_lambdas(manifold, lambdas)?;
    if let Some((index, &value)) = lambdas.iter().enumerate().find(|(_, l)| !(l.abs() < epsilon)) {
        return Err(Error::LambdaOutOfRange {
            index,
            value: value.to_f64().unwrap_or(f64::NAN),
            epsilon: epsilon.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(StyleSample {
        b: offset_point(manifold, lambdas)?,
        lambdas: lambdas.to_vec(),
        alpha,
        epsilon: Some(epsilon),
        kind: SampleKind::Manifold,
    })
}

fn check_epsilon<T: Scalar>(epsilon: T) -> Result<()> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::BadEpsilon(epsilon.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

fn check_range<T: Scalar>(range: (T, T)) -> Result<()> {
    let (l, r) = range;
    if !l.is_finite() || !r.is_finite() || l > r {
        return Err(Error::BadRange(
            l.to_f64().unwrap_or(f64::NAN),
            r.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(())
}

fn draw<T: Scalar>(rng: &mut ChaCha8Rng, range: (T, T)) -> T {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

/// `count` samples with `lambda` uniform in the open box `(-epsilon, epsilon)^S`
/// and `alpha` uniform in `alpha_range`.
pub fn sample_style_random<T: Scalar>(
    manifold: &StyleManifold<T>,
    epsilon: T,
    alpha_range: (T, T),
    count: usize,
    seed: u64,
) -> Result<Vec<StyleSample<T>>> {
    check_epsilon(epsilon)?;
    check_range(alpha_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let lambdas: Vec<T> = (0..manifold.len())
                .map(|_| loop {
                    let l = rng.random_range(-epsilon..epsilon);
                    if l.abs() < epsilon {
                        break l;
                    }
                })
                .collect();
            let alpha = draw(&mut rng, alpha_range);
            sample_style(manifold, &lambdas, epsilon, alpha)
        })
        .collect()
}

/// Baseline: fixed `b = v*`, strength uniform in `alpha_range`.
pub fn baseline_strength<T: Scalar>(
    manifold: &StyleManifold<T>,
    alpha_range: (T, T),
    count: usize,
    seed: u64,
) -> Result<Vec<StyleSample<T>>> {
    check_range(alpha_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| StyleSample {
            b: manifold.v_star.clone(),
            lambdas: Vec::new(),
            alpha: draw(&mut rng, alpha_range),
            epsilon: None,
            kind: SampleKind::Strength,
        })
        .collect())
}

/// Baseline: `b = normalize(sum_k w_k p_k)` for non-negative weights summing to one.
pub fn baseline_convex<T: Scalar>(manifold: &StyleManifold<T>, weights: &[T], alpha: T) -> Result<StyleSample<T>> {
    check_lambdas(manifold, weights)?;
    if let Some(w) = weights.iter().find(|w| !(**w >= T::zero())) {
        return Err(Error::NotConvex(format!("negative weight {w}")));
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > unit_tolerance::<T>() {
        return Err(Error::NotConvex(format!("weights sum to {total}")));
    }
    let mut point = FlatVector::zeros(manifold.v_star.dim());
    for (p, &w) in manifold.tangent_points.iter().zip(weights) {
        point.axpy(w, p)?;
    }
    Ok(StyleSample {
        b: normalize(&point)?,
        lambdas: weights.to_vec(),
        alpha,
        epsilon: None,
        kind: SampleKind::Convex,
    })
}

/// Mean pairwise `1 - cos` among the sampled directions; 0 for fewer than two.
pub fn style_diversity<T: Scalar>(samples: &[StyleSample<T>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let c = cosine_similarity(&samples[i].b, &samples[j].b)?;
            sum += 1.0 - c.to_f64().unwrap_or(f64::NAN);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// `w' = w + alpha * b` on the manifold's layers.
pub fn apply_style<T: Scalar>(
    w: &LatentCode<T>,
    manifold: &StyleManifold<T>,
    sample: &StyleSample<T>,
) -> Result<LatentCode<T>> {
    apply_delta(w, &sample.b, &manifold.layer_mask, sample.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FlatVector<f64> {
        FlatVector::new(v.to_vec()).unwrap()
    }

    fn two_d() -> StyleManifold<f64> {
        fit_manifold("hair", &[fv(&[1.0, 0.0]), fv(&[0.6, 0.8])], LayerMask::all(1)).unwrap()
    }

    #[test]
    fn identical_styles_collapse() {
        let e1 = fv(&[1.0, 0.0, 0.0]);
        let m = fit_manifold("x", &[e1.clone(), e1.clone()], LayerMask::all(1)).unwrap();
        assert_eq!(m.v_star, e1);
        assert!(m.primitives.iter().all(|u| u.norm() == 0.0));
    }

    #[test]
    fn two_d_geometry() {
        let m = two_d();
        // dominant of rows [1,0], [0.6,0.8]: A^T A = [[1.36,0.48],[0.48,0.64]]
        let (a, b, d) = (1.36f64, 0.48f64, 0.64f64);
        let lambda = (a + d) / 2.0 + (((a - d) / 2.0).powi(2) + b * b).sqrt();
        let (x, y) = (b, lambda - a);
        let n = (x * x + y * y).sqrt();
        assert!((m.v_star.as_slice()[0] - x / n).abs() < 1e-12);
        assert!((m.v_star.as_slice()[1] - y / n).abs() < 1e-12);
        for k in 0..2 {
            assert!((m.tangent_points[k].dot(&m.v_star).unwrap() - 1.0).abs() < 1e-9);
            assert!(m.primitives[k].dot(&m.v_star).unwrap().abs() < 1e-9);
        }
        m.validate().unwrap();
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_manifold("x", &[fv(&[1.0, 0.0])], LayerMask::all(1)),
            Err(Error::TooFewStyles(1))
        ));
        // third style nearly orthogonal to the dominant pair
        let styles = [
            fv(&[1.0, 0.0, 0.0]),
            fv(&[1.0, 0.0, 0.0]),
            fv(&[1.0, 0.0, 0.0]),
            fv(&[0.05, 0.0, 1.0]),
        ];
        assert!(matches!(
            fit_manifold("x", &styles, LayerMask::all(1)),
            Err(Error::NearOrthogonalStyle { index: 3, .. })
        ));
    }

    #[test]
    fn center_and_small_offsets() {
        let m = two_d();
        let s = sample_style(&m, &[0.0, 0.0], 0.35, 0.4).unwrap();
        for (a, b) in s.b.as_slice().iter().zip(m.v_star.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for delta in [1e-3, 1e-2, 0.1] {
            let s = sample_style(&m, &[delta, 0.0], 0.35, 0.4).unwrap();
            let c = cosine_similarity(&s.b, &m.v_star).unwrap();
            assert!(c >= 1.0 - delta * delta, "{c} for {delta}");
        }
        assert!(matches!(
            sample_style(&m, &[0.35, 0.0], 0.35, 0.4),
            Err(Error::LambdaOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            sample_style(&m, &[0.0], 0.35, 0.4),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn random_sampling_is_deterministic() {
        let m = two_d();
        let a = sample_style_random(&m, 0.35, (0.36, 0.46), 20, 9).unwrap();
        let b = sample_style_random(&m, 0.35, (0.36, 0.46), 20, 9).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert!(s.lambdas.iter().all(|l| l.abs() < 0.35));
            assert!((0.36..0.46).contains(&s.alpha));
            assert!((s.b.norm() - 1.0).abs() < 1e-9);
        }
        assert!(style_diversity(&a).unwrap() > 0.0);
        assert!(matches!(
            sample_style_random(&m, 0.0, (0.3, 0.4), 1, 0),
            Err(Error::BadEpsilon(_))
        ));
    }

    #[test]
    fn strength_baseline() {
        let m = two_d();
        let one = baseline_strength(&m, (0.4, 0.4), 1, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].alpha, 0.4);
        let many = baseline_strength(&m, (0.2, 0.8), 50, 3).unwrap();
        assert!(many.iter().all(|s| s.b == m.v_star));
        assert_eq!(style_diversity(&many).unwrap(), 0.0);
        assert!(matches!(
            baseline_strength(&m, (0.8, 0.2), 1, 0),
            Err(Error::BadRange(..))
        ));
    }

    #[test]
    fn convex_baseline() {
        let m = fit_manifold(
            "eyeglasses",
            &[fv(&[1.0, 0.0, 0.0]), fv(&[0.6, 0.8, 0.0]), fv(&[0.6, 0.0, 0.8])],
            LayerMask::all(1),
        )
        .unwrap();
        for k in 0..3 {
            let mut w = [0.0; 3];
            w[k] = 1.0;
            let s = baseline_convex(&m, &w, 0.4).unwrap();
            for (a, b) in s.b.as_slice().iter().zip(m.styles[k].as_slice()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(matches!(
            baseline_convex(&m, &[0.5, 0.6, -0.1], 0.4),
            Err(Error::NotConvex(_))
        ));
        assert!(matches!(
            baseline_convex(&m, &[0.5, 0.6, 0.1], 0.4),
            Err(Error::NotConvex(_))
        ));

        let e1 = fv(&[0.0, 1.0]);
        let same = fit_manifold("x", &[e1.clone(), e1.clone()], LayerMask::all(1)).unwrap();
        assert_eq!(baseline_convex(&same, &[0.5, 0.5], 1.0).unwrap().b, e1);
    }

    #[test]
    fn apply_style_uses_mask() {
        let m = fit_manifold(
            "hair",
            &[fv(&[1.0, 0.0, 0.0, 0.0]), fv(&[0.6, 0.8, 0.0, 0.0])],
            LayerMask::new(2, [0]).unwrap(),
        )
        .unwrap();
        let w = LatentCode::zeros(2, 2).unwrap();
        let s = sample_style(&m, &[0.0, 0.0], 0.35, 0.5).unwrap();
        let out = apply_style(&w, &m, &s).unwrap();
        assert_eq!(out.row(1), &[0.0, 0.0]);
        assert!((out.row(0)[0] - 0.5 * m.v_star.as_slice()[0]).abs() < 1e-15);
    }
}
