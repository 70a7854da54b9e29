//! Synthetic latent worlds with planted attribute directions.
//!
//! A [`PlantedWorld`] knows the true unit direction of each attribute and an
//! identity subspace orthogonal to all of them, plus an affine "decoder" whose
//! first `q` outputs read the identity coordinates and next `K` outputs read
//! the attribute coordinates. That makes direction recovery and edit
//! disentanglement exactly checkable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::direction::EditDirection;
use crate::error::{Error, Result};
use crate::latent::{cosine_similarity, FlatVector, LatentCode};
use crate::pair::{assemble_with_provenance, PairDataset};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedWorld<T: Scalar> {
    pub layers: usize,
    pub dim: usize,
    pub attributes: Vec<FlatVector<T>>,
    pub identity_basis: Vec<FlatVector<T>>,
    /// `F` rows of length `layers * dim`.
    pub decoder: Vec<Vec<T>>,
    pub offset: FlatVector<T>,
    pub seed: u64,
}

/// How the pair noise standard deviation relates to `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// Per-coordinate std `sigma / sqrt(dim)`: each layer's noise has
    /// expected norm about `sigma`.
    #[default]
    PerLayer,
    /// Per-coordinate std `sigma`.
    PerCoordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub attribute: usize,
    pub n: usize,
    pub strength_range: (f64, f64),
    pub sigma: f64,
    pub noise: NoiseScale,
    pub seed: u64,
}

impl PairSpec {
    pub fn new(attribute: usize, n: usize, sigma: f64, seed: u64) -> Self {
        Self {
            attribute,
            n,
            strength_range: (0.8, 1.2),
            sigma,
            noise: NoiseScale::default(),
            seed,
        }
    }
}

fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng, len: usize) -> Vec<T> {
    (0..len).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Append an orthonormalized copy of `v` against `basis`; two passes of
/// modified Gram-Schmidt. Returns false when `v` was (numerically) dependent.
fn push_orthonormal<T: Scalar>(basis: &mut Vec<Vec<T>>, mut v: Vec<T>) -> bool {
    for _ in 0..2 {
        for b in basis.iter() {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, &y)| *x -= p * y);
        }
    }
    let n = dot(&v, &v).sqrt();
    if n < T::lit(1e-6) {
        return false;
    }
    v.iter_mut().for_each(|x| *x = *x / n);
    basis.push(v);
    true
}

fn orthonormal_set<T: Scalar>(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<T>> {
    let mut basis = Vec::with_capacity(count);
    while basis.len() < count {
        push_orthonormal(&mut basis, gaussian(rng, len));
    }
    basis
}

fn check_sizes(layers: usize, dim: usize, k: usize, q: usize, f: usize) -> Result<()> {
    if layers == 0 || dim == 0 {
        return Err(Error::InvalidShape(format!("{layers}x{dim}")));
    }
    if k + q > layers * dim {
        return Err(Error::TooManyDirections {
            requested: k + q,
            available: layers * dim,
        });
    }
    if f < k + q || f == 0 {
        return Err(Error::InvalidShape(format!(
            "decoder needs at least {} features (identity + attributes), got {f}",
            (k + q).max(1)
        )));
    }
    Ok(())
}

/// World with `k` mutually orthogonal attribute directions.
pub fn make_world<T: Scalar>(
    seed: u64,
    layers: usize,
    dim: usize,
    k: usize,
    q: usize,
    f: usize,
) -> Result<PlantedWorld<T>> {
    check_sizes(layers, dim, k, q, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = orthonormal_set::<T>(&mut rng, k + q, layers * dim);
    let attributes = basis[..k].to_vec();
    build(seed, layers, dim, attributes, basis[k..].to_vec(), f, &mut rng)
}

/// World whose attribute directions have the given Gram matrix (unit
/// diagonal, positive definite). The identity subspace stays orthogonal to
/// every attribute.
pub fn make_world_correlated<T: Scalar>(
    seed: u64,
    layers: usize,
    dim: usize,
    gram: &[Vec<f64>],
    q: usize,
    f: usize,
) -> Result<PlantedWorld<T>> {
    let k = gram.len();
    check_sizes(layers, dim, k, q, f)?;
    let chol = cholesky(gram)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = orthonormal_set::<T>(&mut rng, k + q, layers * dim);
    let attributes = (0..k)
        .map(|i| {
            let mut g = vec![T::zero(); layers * dim];
            for (j, b) in basis[..k].iter().enumerate() {
                let c = T::lit(chol[i][j]);
                g.iter_mut().zip(b).for_each(|(x, &y)| *x += c * y);
            }
            g
        })
        .collect();
    build(seed, layers, dim, attributes, basis[k..].to_vec(), f, &mut rng)
}

fn cholesky(gram: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = gram.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        if gram[i].len() != k || (gram[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidShape(
                "gram matrix must be square with unit diagonal".into(),
            ));
        }
        for j in 0..=i {
            if (gram[i][j] - gram[j][i]).abs() > 1e-12 {
                return Err(Error::InvalidShape("gram matrix must be symmetric".into()));
            }
            let s: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
            if i == j {
                let d = gram[i][i] - s;
                if d <= 0.0 {
                    return Err(Error::InvalidShape("gram matrix must be positive definite".into()));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (gram[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn build<T: Scalar>(
    seed: u64,
    layers: usize,
    dim: usize,
    attributes: Vec<Vec<T>>,
    identity: Vec<Vec<T>>,
    f: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PlantedWorld<T>> {
    let r = layers * dim;
    let scale = T::one() / T::lit(r as f64).sqrt();
    let mut decoder: Vec<Vec<T>> = identity.iter().chain(&attributes).cloned().collect();
    while decoder.len() < f {
        decoder.push(gaussian::<T>(rng, r).into_iter().map(|x| x * scale).collect());
    }
    let offset = FlatVector::new(gaussian(rng, f))?;
    Ok(PlantedWorld {
        layers,
        dim,
        attributes: attributes.into_iter().map(FlatVector::new).collect::<Result<_>>()?,
        identity_basis: identity.into_iter().map(FlatVector::new).collect::<Result<_>>()?,
        decoder,
        offset,
        seed,
    })
}

impl<T: Scalar> PlantedWorld<T> {
    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    pub fn identity_rank(&self) -> usize {
        self.identity_basis.len()
    }

    pub fn features(&self) -> usize {
        self.decoder.len()
    }

    pub fn attribute(&self, j: usize) -> Result<&FlatVector<T>> {
        self.attributes.get(j).ok_or(Error::BadAttribute {
            index: j,
            count: self.attributes.len(),
        })
    }

    /// Planted direction `j` as a latent-shaped code.
    pub fn attribute_latent(&self, j: usize) -> Result<LatentCode<T>> {
        LatentCode::unflatten(self.attribute(j)?, self.layers, self.dim)
    }

    /// Identity block of a decoded feature vector.
    pub fn identity_readout<'a>(&self, features: &'a FlatVector<T>) -> &'a [T] {
        &features.as_slice()[..self.identity_rank()]
    }

    /// Attribute `j`'s coordinate in a decoded feature vector.
    pub fn attribute_readout(&self, features: &FlatVector<T>, j: usize) -> T {
        features.as_slice()[self.identity_rank() + j]
    }
}

/// `M * flatten(w) + c`.
pub fn decode<T: Scalar>(world: &PlantedWorld<T>, w: &LatentCode<T>) -> Result<FlatVector<T>> {
    if w.shape() != (world.layers, world.dim) {
        return Err(Error::DimMismatch {
            expected: world.layers * world.dim,
            got: w.layers() * w.dim(),
        });
    }
    let x = w.as_slice();
    let out = world
        .decoder
        .iter()
        .zip(world.offset.as_slice())
        .map(|(row, &c)| dot(row, x) + c)
        .collect();
    FlatVector::new(out)
}

/// Negatives are standard Gaussian latents; positives add `s * g_j` with
/// `s` uniform in the strength range plus Gaussian noise.
pub fn generate_pairs<T: Scalar>(world: &PlantedWorld<T>, spec: &PairSpec) -> Result<PairDataset<T>> {
    let g = world.attribute(spec.attribute)?;
    let (lo, hi) = spec.strength_range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::BadRange(lo, hi));
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::BadRange(spec.sigma, spec.sigma));
    }
    let r = world.layers * world.dim;
    let std = match spec.noise {
        NoiseScale::PerLayer => spec.sigma / (world.dim as f64).sqrt(),
        NoiseScale::PerCoordinate => spec.sigma,
    };
    let std = T::lit(std);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(spec.n);
    let mut provenance = Vec::with_capacity(spec.n);
    for k in 0..spec.n {
        let negative: Vec<T> = gaussian(&mut rng, r);
        let s = if lo == hi { lo } else { rng.random_range(lo..hi) };
        let noise: Vec<T> = gaussian(&mut rng, r);
        let st = T::lit(s);
        let positive: Vec<T> = negative
            .iter()
            .zip(g.as_slice())
            .zip(&noise)
            .map(|((&w, &gi), &e)| w + st * gi + std * e)
            .collect();
        pairs.push((
            LatentCode::from_flat(world.layers, world.dim, positive)?,
            LatentCode::from_flat(world.layers, world.dim, negative)?,
        ));
        provenance.push(format!(
            "oracle world={} attr={} pair={k} strength={s:.6} sigma={}",
            world.seed, spec.attribute, spec.sigma
        ));
    }
    assemble_with_provenance(&format!("attr{}", spec.attribute), pairs, provenance)
}

/// `|cos(estimate, g_j)|`.
pub fn recovery_score<T: Scalar>(world: &PlantedWorld<T>, j: usize, estimated: &EditDirection<T>) -> Result<f64> {
    let c = cosine_similarity(&estimated.direction, world.attribute(j)?)?;
    Ok(c.abs().to_f64().unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::{difference_directions, estimate_direction, Method};
    use crate::latent::LayerMask;

    fn world() -> PlantedWorld<f64> {
        make_world(7, 4, 32, 3, 8, 64).unwrap()
    }

    #[test]
    fn world_invariants() {
        let w = world();
        let all: Vec<&FlatVector<f64>> = w.attributes.iter().chain(&w.identity_basis).collect();
        for (i, a) in all.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-9);
            for b in &all[i + 1..] {
                assert!(a.dot(b).unwrap().abs() < 1e-9);
            }
        }
        assert_eq!(w.features(), 64);
        assert_eq!(w, world());
        assert!(matches!(
            make_world::<f64>(1, 2, 2, 3, 2, 8),
            Err(Error::TooManyDirections {
                requested: 5,
                available: 4
            })
        ));
    }

    #[test]
    fn decode_examples() {
        let w = world();
        let zero = LatentCode::zeros(4, 32).unwrap();
        assert_eq!(decode(&w, &zero).unwrap(), w.offset);

        let base = LatentCode::from_flat(4, 32, (0..128).map(|i| (i as f64).sin()).collect()).unwrap();
        let g = w.attribute(1).unwrap();
        let moved = LatentCode::from_flat(4, 32, base.flatten().add(&g.scaled(0.7)).unwrap().into_vec()).unwrap();
        let (a, b) = (decode(&w, &base).unwrap(), decode(&w, &moved).unwrap());
        for (row, (x, y)) in w.decoder.iter().zip(a.as_slice().iter().zip(b.as_slice())) {
            let mg: f64 = row.iter().zip(g.as_slice()).map(|(p, q)| p * q).sum();
            assert!((y - x - 0.7 * mg).abs() < 1e-12);
        }
        for (x, y) in w.identity_readout(&a).iter().zip(w.identity_readout(&b)) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((w.attribute_readout(&b, 1) - w.attribute_readout(&a, 1) - 0.7).abs() < 1e-9);
        assert!(decode(&w, &LatentCode::zeros(2, 32).unwrap()).is_err());
    }

    #[test]
    fn noiseless_pairs_give_planted_direction() {
        let w = world();
        let ds = generate_pairs(&w, &PairSpec::new(2, 5, 0.0, 1)).unwrap();
        for d in difference_directions(&ds).unwrap() {
            for (a, b) in d.as_slice().iter().zip(w.attribute(2).unwrap().as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(matches!(
            generate_pairs(&w, &PairSpec::new(3, 5, 0.0, 1)),
            Err(Error::BadAttribute { index: 3, count: 3 })
        ));
        assert_eq!(
            generate_pairs(&w, &PairSpec::new(0, 4, 0.1, 5)).unwrap(),
            generate_pairs(&w, &PairSpec::new(0, 4, 0.1, 5)).unwrap()
        );
    }

    #[test]
    fn recovery_examples() {
        let w = world();
        let ds = generate_pairs(&w, &PairSpec::new(0, 10, 0.05, 3)).unwrap();
        let est = estimate_direction(&ds, Method::Svd, LayerMask::all(4)).unwrap();
        assert!(recovery_score(&w, 0, &est).unwrap() >= 0.99);
        assert!(recovery_score(&w, 1, &est).unwrap() < 0.2);

        let mut exact = est.clone();
        exact.direction = w.attribute(1).unwrap().clone();
        assert!((recovery_score(&w, 1, &exact).unwrap() - 1.0).abs() < 1e-12);
        assert!(recovery_score(&w, 0, &exact).unwrap() < 1e-12);
    }

    #[test]
    fn correlated_world() {
        let gram = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let w: PlantedWorld<f64> = make_world_correlated(4, 2, 16, &gram, 4, 8).unwrap();
        let c = w.attributes[0].dot(&w.attributes[1]).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        for a in &w.attributes {
            assert!((a.norm() - 1.0).abs() < 1e-12);
            for b in &w.identity_basis {
                assert!(a.dot(b).unwrap().abs() < 1e-9);
            }
        }
        assert!(make_world_correlated::<f64>(4, 2, 16, &[vec![1.0, 2.0], vec![2.0, 1.0]], 4, 8).is_err());
    }
}
