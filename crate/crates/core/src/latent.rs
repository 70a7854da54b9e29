//! Layered latent codes, flattened vectors and layer masks.
//!
//! A [`LatentCode`] holds one `layers x dim` point, one row per generator
//! layer. Direction math runs on [`FlatVector`]s: the row-major
//! concatenation of those rows, so entry `(l, d)` lives at `l * dim + d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar, ZERO_NORM};

fn check_finite<T: Scalar>(data: &[T]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLatent<T>", bound = "T: Scalar")]
pub struct LatentCode<T: Scalar> {
    layers: usize,
    dim: usize,
    data: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawLatent<T> {
    layers: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<RawLatent<T>> for LatentCode<T> {
    type Error = Error;

    fn try_from(raw: RawLatent<T>) -> Result<Self> {
        LatentCode::from_flat(raw.layers, raw.dim, raw.data)
    }
}

impl<T: Scalar> LatentCode<T> {
    /// Build from row-major data of length `layers * dim`.
    pub fn from_flat(layers: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if layers == 0 || dim == 0 {
            return Err(Error::InvalidShape(format!("{layers}x{dim}")));
        }
        if data.len() != layers * dim {
            return Err(Error::DimMismatch {
                expected: layers * dim,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { layers, dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::from_flat(rows.len(), dim, rows.concat())
    }

    pub fn zeros(layers: usize, dim: usize) -> Result<Self> {
        Self::from_flat(layers, dim, vec![T::zero(); layers * dim])
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.layers, self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, layer: usize) -> &[T] {
        &self.data[layer * self.dim..(layer + 1) * self.dim]
    }

    pub fn get(&self, layer: usize, d: usize) -> T {
        self.data[layer * self.dim + d]
    }

    pub fn flatten(&self) -> FlatVector<T> {
        FlatVector {
            data: self.data.clone(),
        }
    }

    pub fn unflatten(flat: &FlatVector<T>, layers: usize, dim: usize) -> Result<Self> {
        Self::from_flat(layers, dim, flat.data.clone())
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Cast to another scalar type through `f64`.
    pub fn cast<U: Scalar>(&self) -> LatentCode<U> {
        LatentCode {
            layers: self.layers,
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// A flattened `layers * dim` vector (directions, differences, features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Scalar")]
pub struct FlatVector<T: Scalar> {
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<Vec<T>> for FlatVector<T> {
    type Error = Error;

    fn try_from(data: Vec<T>) -> Result<Self> {
        FlatVector::new(data)
    }
}

impl<T: Scalar> From<FlatVector<T>> for Vec<T> {
    fn from(v: FlatVector<T>) -> Self {
        v.data
    }
}

impl<T: Scalar> FlatVector<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        check_finite(&data)?;
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![T::zero(); dim],
        }
    }

    /// Unit vector along axis `i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = T::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn norm(&self) -> T {
        norm(&self.data)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        same_dim(self, other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            data: self.data.iter().map(|&v| v * k).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_dim(self, other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_dim(self, other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: T, other: &Self) -> Result<()> {
        same_dim(self, other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> FlatVector<U> {
        FlatVector {
            data: self
                .data
                .iter()
                .map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

fn same_dim<T: Scalar>(a: &FlatVector<T>, b: &FlatVector<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

pub fn flatten<T: Scalar>(latent: &LatentCode<T>) -> FlatVector<T> {
    latent.flatten()
}

pub fn unflatten<T: Scalar>(flat: &FlatVector<T>, layers: usize, dim: usize) -> Result<LatentCode<T>> {
    LatentCode::unflatten(flat, layers, dim)
}

pub fn cosine_similarity<T: Scalar>(a: &FlatVector<T>, b: &FlatVector<T>) -> Result<T> {
    same_dim(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    let eps = T::lit(ZERO_NORM);
    if na < eps || nb < eps {
        return Err(Error::ZeroVector);
    }
    let c = dot(&a.data, &b.data) / (na * nb);
    // rounding can push |c| a few ulps past 1
    Ok(c.max(-T::one()).min(T::one()))
}

pub fn euclidean_distance<T: Scalar>(a: &FlatVector<T>, b: &FlatVector<T>) -> Result<T> {
    same_dim(a, b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt())
}

pub fn normalize<T: Scalar>(a: &FlatVector<T>) -> Result<FlatVector<T>> {
    let n = a.norm();
    if n < T::lit(ZERO_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(FlatVector {
        data: a.data.iter().map(|&v| v / n).collect(),
    })
}

/// Identity-preservation proxies between two face-embedding vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityScores {
    pub cosine: f64,
    pub distance: f64,
}

pub fn identity_scores<T: Scalar>(a: &FlatVector<T>, b: &FlatVector<T>) -> Result<IdentityScores> {
    Ok(IdentityScores {
        cosine: cosine_similarity(a, b)?.to_f64().unwrap_or(f64::NAN),
        distance: euclidean_distance(a, b)?.to_f64().unwrap_or(f64::NAN),
    })
}

/// Set of generator layers an edit touches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct LayerMask {
    layers: usize,
    included: Vec<usize>,
    /// Requested indices that were dropped because they were `>= layers`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    clipped: Vec<usize>,
}

#[derive(Deserialize)]
struct RawMask {
    layers: usize,
    included: Vec<usize>,
    #[serde(default)]
    clipped: Vec<usize>,
}

impl TryFrom<RawMask> for LayerMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        let mut mask = LayerMask::new(raw.layers, raw.included)?;
        mask.clipped = raw.clipped;
        Ok(mask)
    }
}

impl LayerMask {
    /// Sorted, deduplicated mask; any index `>= layers` is an error.
    pub fn new(layers: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut included: Vec<usize> = indices.into_iter().collect();
        included.sort_unstable();
        included.dedup();
        if let Some(&index) = included.iter().find(|&&i| i >= layers) {
            return Err(Error::MaskOutOfRange { index, layers });
        }
        Ok(Self {
            layers,
            included,
            clipped: Vec::new(),
        })
    }

    /// Like [`LayerMask::new`] but drops out-of-range indices and records them.
    pub fn clipped(layers: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let (keep, mut drop): (Vec<usize>, Vec<usize>) = indices.into_iter().partition(|&i| i < layers);
        drop.sort_unstable();
        drop.dedup();
        let mut mask = Self::new(layers, keep).expect("in-range indices");
        mask.clipped = drop;
        mask
    }

    pub fn all(layers: usize) -> Self {
        Self {
            layers,
            included: (0..layers).collect(),
            clipped: Vec::new(),
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn included(&self) -> &[usize] {
        &self.included
    }

    pub fn clipped_indices(&self) -> &[usize] {
        &self.clipped
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.included.binary_search(&layer).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.included.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FlatVector<f64> {
        FlatVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn flatten_is_row_major() {
        let w = LatentCode::from_flat(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(w.flatten().as_slice(), &[1.0, 2.0, 3.0]);
        let w = LatentCode::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(w.flatten().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(w.get(1, 0), 3.0);
    }

    #[test]
    fn flatten_round_trip_full_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..18 * 512).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w = LatentCode::from_flat(18, 512, data).unwrap();
        let back = unflatten(&flatten(&w), 18, 512).unwrap();
        assert_eq!(back, w);
        assert!(back
            .as_slice()
            .iter()
            .zip(w.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn latent_rejects_bad_data() {
        assert!(matches!(
            LatentCode::from_flat(2, 2, vec![0.0; 3]),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            LatentCode::from_flat(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(LatentCode::<f64>::from_flat(0, 2, vec![]).is_err());
        let json = r#"{"layers":1,"dim":2,"data":[1.0]}"#;
        assert!(serde_json::from_str::<LatentCode<f64>>(json).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&fv(&[1.0, 1.0]), &fv(&[1.0, 0.0])).unwrap();
        assert!((c - 0.70710678).abs() < 1e-8);
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            cosine_similarity(&fv(&[1.0]), &fv(&[1.0, 0.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&fv(&[1.0, 2.0]), &fv(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&fv(&[0.0, 0.0]), &fv(&[3.0, 4.0])).unwrap(), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut sum = 0.0;
        for i in 0..512 {
            sum += (a[i] - b[i]).powi(2);
        }
        let d = euclidean_distance(&fv(&a), &fv(&b)).unwrap();
        assert!((d - sum.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&fv(&[3.0, 4.0])).unwrap();
        assert!((n.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((n.as_slice()[1] - 0.8).abs() < 1e-15);
        let again = normalize(&n).unwrap();
        assert!(again
            .as_slice()
            .iter()
            .zip(n.as_slice())
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(normalize(&fv(&[0.0, 1e-13])), Err(Error::ZeroVector)));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let dim = rng.random_range(1..64);
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-100.0..100.0)).collect();
            if let Ok(u) = normalize(&fv(&x)) {
                assert!((u.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn f32_path_works() {
        let a = FlatVector::<f32>::new(vec![3.0, 4.0]).unwrap();
        let n = normalize(&a).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mask_normalizes_and_validates() {
        let m = LayerMask::new(18, [6, 10, 7, 6]).unwrap();
        assert_eq!(m.included(), &[6, 7, 10]);
        assert!(m.contains(7) && !m.contains(8));
        assert!(matches!(
            LayerMask::new(4, [4]),
            Err(Error::MaskOutOfRange { index: 4, layers: 4 })
        ));
        let c = LayerMask::clipped(18, 7..=18);
        assert_eq!(c.included(), &(7..18).collect::<Vec<_>>()[..]);
        assert_eq!(c.clipped_indices(), &[18]);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<LayerMask>(&json).unwrap(), c);
        assert!(serde_json::from_str::<LayerMask>(r#"{"layers":2,"included":[5]}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            s in 0.01f64..100.0,
            t in 0.01f64..100.0,
        ) {
            let (a, b) = (fv(&a), fv(&b));
            if let (Ok(ab), Ok(ba)) = (cosine_similarity(&a, &b), cosine_similarity(&b, &a)) {
                proptest::prop_assert!((ab - ba).abs() < 1e-12);
                let scaled = cosine_similarity(&a.scaled(s), &b.scaled(t)).unwrap();
                proptest::prop_assert!((ab - scaled).abs() < 1e-9);
                proptest::prop_assert!((-1.0..=1.0).contains(&ab));
            }
        }
    }
}
