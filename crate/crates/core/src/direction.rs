//! Attribute direction estimation from latent pairs.
//!
//! Each pair contributes a unit difference `d_k = normalize(w_p - w_n)`. The
//! estimate is the unit vector maximizing `sum_k <d_k, d>^2`, which is the top
//! right singular vector of the matrix whose rows are the `d_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::latent::{cosine_similarity, normalize, FlatVector, LayerMask};
use crate::pair::PairDataset;
use crate::scalar::{dot, Scalar};
use crate::svd::thin_svd;

/// Relative gap under which the top two singular values count as tied.
pub const AMBIGUITY_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svd,
    Mean,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "svd" => Ok(Method::Svd),
            "mean" => Ok(Method::Mean),
            other => Err(format!("unknown method '{other}' (expected svd or mean)")),
        }
    }
}

/// Output of an estimator before it is bound to an attribute and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionEstimate<T: Scalar> {
    pub direction: FlatVector<T>,
    pub singular_values: Vec<T>,
    pub objective: T,
    pub method: Method,
    pub n_inputs: usize,
    pub warnings: Vec<Warning>,
}

impl<T: Scalar> DirectionEstimate<T> {
    pub fn into_direction(mut self, attribute: &str, layer_mask: LayerMask) -> Result<EditDirection<T>> {
        if !layer_mask.clipped_indices().is_empty() {
            self.warnings.push(Warning::MaskClipped {
                dropped: layer_mask.clipped_indices().to_vec(),
            });
        }
        let dir = EditDirection {
            attribute: attribute.to_owned(),
            direction: self.direction,
            layer_mask,
            n_pairs: self.n_inputs,
            singular_values: self.singular_values,
            objective: self.objective,
            method: self.method,
            warnings: self.warnings,
        };
        dir.validate()?;
        Ok(dir)
    }
}

/// A unit edit direction in flattened latent space plus its layer mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EditDirection<T: Scalar> {
    pub attribute: String,
    pub direction: FlatVector<T>,
    pub layer_mask: LayerMask,
    pub n_pairs: usize,
    pub singular_values: Vec<T>,
    pub objective: T,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

pub(crate) fn unit_tolerance<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

impl<T: Scalar> EditDirection<T> {
    pub fn layers(&self) -> usize {
        self.layer_mask.layers()
    }

    pub fn dim(&self) -> usize {
        self.direction.dim() / self.layers().max(1)
    }

    /// Check unit norm, shape consistency and singular value ordering.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvariantViolation {
            name: self.attribute.clone(),
            reason,
        };
        let layers = self.layers();
        if layers == 0 || self.direction.dim() == 0 || self.direction.dim() % layers != 0 {
            return Err(fail(format!(
                "direction length {} not divisible into {layers} layers",
                self.direction.dim()
            )));
        }
        let n = self.direction.norm();
        if (n - T::one()).abs() > unit_tolerance::<T>() {
            return Err(fail(format!("direction norm {n} is not 1")));
        }
        if self.singular_values.windows(2).any(|w| w[0] < w[1]) || self.singular_values.iter().any(|s| *s < T::zero()) {
            return Err(fail("singular values not descending and non-negative".into()));
        }
        if self.method == Method::Svd && self.singular_values.len() != self.n_pairs.min(self.direction.dim()) {
            return Err(fail(format!(
                "{} singular values for {} pairs",
                self.singular_values.len(),
                self.n_pairs
            )));
        }
        if !self.objective.is_finite() || self.objective < T::zero() {
            return Err(fail("objective must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn check_dims<T: Scalar>(dirs: &[FlatVector<T>]) -> Result<usize> {
    let dim = dirs.first().ok_or(Error::EmptyInput)?.dim();
    if let Some(bad) = dirs.iter().find(|d| d.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    Ok(dim)
}

/// Unit difference `positive - negative` for every pair, in dataset order.
pub fn difference_directions<T: Scalar>(dataset: &PairDataset<T>) -> Result<Vec<FlatVector<T>>> {
    dataset
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, (p, n))| {
            let diff = p.flatten().sub(&n.flatten())?;
            normalize(&diff).map_err(|e| match e {
                Error::ZeroVector => Error::DegeneratePair(k),
                e => e,
            })
        })
        .collect()
}

/// `sum_k <d_k, candidate>^2`.
pub fn objective_value<T: Scalar>(dirs: &[FlatVector<T>], candidate: &FlatVector<T>) -> Result<T> {
    dirs.iter().map(|d| d.dot(candidate).map(|p| p * p)).sum()
}

/// Top right singular vector of the stacked directions, oriented so that
/// `sum_k <d_k, v> >= 0`.
pub fn estimate_dominant<T: Scalar>(dirs: &[FlatVector<T>]) -> Result<DirectionEstimate<T>> {
    check_dims(dirs)?;
    let rows: Vec<Vec<T>> = dirs.iter().map(|d| d.as_slice().to_vec()).collect();
    let svd = thin_svd(&rows);
    let sigma = svd.singular_values[0];
    let mut top = svd.right_vectors.into_iter().next().unwrap_or_default();
    if sigma <= T::zero() {
        return Err(Error::ZeroVector);
    }

    let alignment: T = dirs.iter().map(|d| dot(d.as_slice(), &top)).sum();
    if alignment < T::zero() {
        top.iter_mut().for_each(|x| *x = -*x);
    }

    let mut warnings = Vec::new();
    if dirs.len() == 1 {
        warnings.push(Warning::SinglePair);
    }
    if let Some(&second) = svd.singular_values.get(1) {
        if sigma - second < T::lit(AMBIGUITY_RATIO) * sigma {
            warnings.push(Warning::AmbiguousDominant {
                sigma1: sigma.to_f64().unwrap_or(f64::NAN),
                sigma2: second.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    Ok(DirectionEstimate {
        direction: FlatVector::new(top)?,
        objective: sigma * sigma,
        singular_values: svd.singular_values,
        method: Method::Svd,
        n_inputs: dirs.len(),
        warnings,
    })
}

/// Normalized mean of the directions.
pub fn mean_direction<T: Scalar>(dirs: &[FlatVector<T>]) -> Result<DirectionEstimate<T>> {
    let dim = check_dims(dirs)?;
    let mut sum = FlatVector::zeros(dim);
    for d in dirs {
        sum.axpy(T::one(), d)?;
    }
    let direction = normalize(&sum.scaled(T::one() / T::lit(dirs.len() as f64)))?;
    let objective = objective_value(dirs, &direction)?;
    let mut warnings = Vec::new();
    if dirs.len() == 1 {
        warnings.push(Warning::SinglePair);
    }
    Ok(DirectionEstimate {
        direction,
        singular_values: Vec::new(),
        objective,
        method: Method::Mean,
        n_inputs: dirs.len(),
        warnings,
    })
}

/// Difference directions followed by the chosen estimator.
pub fn estimate_direction<T: Scalar>(
    dataset: &PairDataset<T>,
    method: Method,
    layer_mask: LayerMask,
) -> Result<EditDirection<T>> {
    if layer_mask.layers() != dataset.layers() {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} layers, dataset has {}",
            layer_mask.layers(),
            dataset.layers()
        )));
    }
    let dirs = difference_directions(dataset)?;
    let estimate = match method {
        Method::Svd => estimate_dominant(&dirs)?,
        Method::Mean => mean_direction(&dirs)?,
    };
    estimate.into_direction(dataset.attribute(), layer_mask)
}

/// Histogram edges for pairwise similarity summaries.
pub const SIMILARITY_BIN_EDGES: [f64; 5] = [0.0, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub bin_edges: [f64; 5],
    pub normalized_frequency: [f64; 4],
    pub mean: f64,
    pub pairs: usize,
}

fn bin_of(c: f64) -> usize {
    // values below the first edge (negative cosines) land in the lowest bin,
    // the last bin is closed on the right
    SIMILARITY_BIN_EDGES[1..4].iter().take_while(|&&e| c >= e).count()
}

/// Histogram and mean of all pairwise (signed) cosine similarities.
pub fn pairwise_stats_vectors<T: Scalar>(vectors: &[FlatVector<T>]) -> Result<SimilarityStats> {
    if vectors.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: vectors.len(),
        });
    }
    check_dims(vectors)?;
    let mut counts = [0usize; 4];
    let mut sum = 0.0;
    let mut total = 0usize;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let c = cosine_similarity(&vectors[i], &vectors[j])?
                .to_f64()
                .unwrap_or(f64::NAN);
            counts[bin_of(c)] += 1;
            sum += c;
            total += 1;
        }
    }
    let t = total as f64;
    Ok(SimilarityStats {
        bin_edges: SIMILARITY_BIN_EDGES,
        normalized_frequency: counts.map(|c| c as f64 / t),
        mean: sum / t,
        pairs: total,
    })
}

pub fn pairwise_stats<T: Scalar>(directions: &[EditDirection<T>]) -> Result<SimilarityStats> {
    let vectors: Vec<FlatVector<T>> = directions.iter().map(|d| d.direction.clone()).collect();
    pairwise_stats_vectors(&vectors)
}
