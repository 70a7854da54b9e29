//! Request and response bodies of the HTTP API.
//!
//! Latents travel as `{layers, dim, data}`; anywhere a latent is accepted a
//! `{path, index}` reference to an LFD1 latent container on the server's
//! filesystem works too.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use wplus::direction::{EditDirection, Method};
use wplus::store::{load_container, Container, LibraryDirection, LibraryManifold, Provenance};
use wplus::style::{StyleManifold, StyleSample};
use wplus::{FlatVector64, LatentCode64, LayerMask, Warning};

use crate::bridge::DecodedImage;
use crate::error::{ApiError, ErrorDetail};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum LatentRef {
    Inline(LatentCode64),
    File { path: PathBuf, index: usize },
}

impl<'de> Deserialize<'de> for LatentRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = serde_json::Value::deserialize(d)?;
        if let Some(path) = value.get("path") {
            let path = path
                .as_str()
                .ok_or_else(|| D::Error::custom("latent path must be a string"))?;
            let index = match value.get("index") {
                None => 0,
                Some(i) => i
                    .as_u64()
                    .ok_or_else(|| D::Error::custom("latent index must be a non-negative integer"))?
                    as usize,
            };
            return Ok(LatentRef::File {
                path: path.into(),
                index,
            });
        }
        LatentCode64::deserialize(value)
            .map(LatentRef::Inline)
            .map_err(D::Error::custom)
    }
}

impl From<LatentCode64> for LatentRef {
    fn from(w: LatentCode64) -> Self {
        LatentRef::Inline(w)
    }
}

impl LatentRef {
    pub fn resolve(&self) -> Result<LatentCode64, ApiError> {
        match self {
            LatentRef::Inline(w) => Ok(w.clone()),
            LatentRef::File { path, index } => match load_container::<f64>(path)? {
                Container::Latents(batch) => batch.latents().get(*index).cloned().ok_or_else(|| {
                    ApiError::bad_request(format!(
                        "{} holds {} latents, index {index} requested",
                        path.display(),
                        batch.len()
                    ))
                }),
                Container::Pairs(_) => Err(ApiError::bad_request(format!(
                    "{} holds latent pairs, not latents",
                    path.display()
                ))),
            },
        }
    }
}

/// Explicit indices win over a named preset; `None` when neither is given.
pub fn requested_mask(
    layers: usize,
    indices: Option<&[usize]>,
    preset: Option<&str>,
) -> Result<Option<LayerMask>, ApiError> {
    match (indices, preset) {
        (Some(ix), _) => Ok(Some(LayerMask::new(layers, ix.iter().copied())?)),
        (None, Some(p)) => Ok(Some(wplus::preset_layer_mask(p, layers)?)),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceInfo {
    pub name: String,
    pub version: String,
    pub library: LibraryInfo,
    pub bridge: Option<BridgeStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryInfo {
    pub path: Option<PathBuf>,
    pub directions: usize,
    pub manifolds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeStatus {
    pub base_url: String,
    pub info: Option<crate::bridge::BridgeInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorDetail>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Direction,
    Manifold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySummary {
    pub name: String,
    pub kind: EntryKind,
    pub attribute: String,
    pub layers: usize,
    pub dim: usize,
    pub layer_mask: Vec<usize>,
    /// Pairs behind a direction, styles behind a manifold.
    pub inputs: usize,
    pub provenance: Provenance,
}

impl From<&LibraryDirection<f64>> for EntrySummary {
    fn from(d: &LibraryDirection<f64>) -> Self {
        Self {
            name: d.name.clone(),
            kind: EntryKind::Direction,
            attribute: d.direction.attribute.clone(),
            layers: d.direction.layers(),
            dim: d.direction.dim(),
            layer_mask: d.direction.layer_mask.included().to_vec(),
            inputs: d.direction.n_pairs,
            provenance: d.provenance.clone(),
        }
    }
}

impl From<&LibraryManifold<f64>> for EntrySummary {
    fn from(m: &LibraryManifold<f64>) -> Self {
        let layers = m.manifold.layer_mask.layers();
        Self {
            name: m.name.clone(),
            kind: EntryKind::Manifold,
            attribute: m.manifold.attribute.clone(),
            layers,
            dim: m.manifold.v_star.dim() / layers.max(1),
            layer_mask: m.manifold.layer_mask.included().to_vec(),
            inputs: m.manifold.len(),
            provenance: m.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LibraryEntry {
    Direction(LibraryDirection<f64>),
    Manifold(LibraryManifold<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWire {
    pub positive: LatentCode64,
    pub negative: LatentCode64,
}

fn default_method() -> Method {
    Method::Svd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRequest {
    pub name: String,
    #[serde(default)]
    pub attribute: Option<String>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub pairs: Option<Vec<PairWire>>,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    #[serde(default)]
    pub layer_mask: Option<Vec<usize>>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub overwrite: bool,
}

/// Query parameters when the dataset is uploaded as a raw LFD1 body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateQuery {
    pub name: String,
    #[serde(default)]
    pub attribute: Option<String>,
    #[serde(default)]
    pub method: Option<String>,
    /// Comma separated layer indices.
    #[serde(default)]
    pub layer_mask: Option<String>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub name: String,
    pub direction: EditDirection<f64>,
    pub provenance: Provenance,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub latent: LatentRef,
    pub direction: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub layer_mask: Option<Vec<usize>>,
    #[serde(default)]
    pub decode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub latent: LatentCode64,
    pub image: Option<DecodedImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_error: Option<ErrorDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepWire {
    pub direction: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub layer_mask: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequentialRequest {
    pub latent: LatentRef,
    pub steps: Vec<StepWire>,
    #[serde(default)]
    pub intermediates: bool,
    #[serde(default)]
    pub decode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResponse {
    pub latent: LatentCode64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediates: Option<Vec<LatentCode64>>,
    pub image: Option<DecodedImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_error: Option<ErrorDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleFitRequest {
    pub name: String,
    #[serde(default)]
    pub attribute: Option<String>,
    /// Library directions used as styles.
    #[serde(default)]
    pub directions: Option<Vec<String>>,
    /// Inline style directions; needs `layers`.
    #[serde(default)]
    pub styles: Option<Vec<FlatVector64>>,
    #[serde(default)]
    pub layers: Option<usize>,
    #[serde(default)]
    pub layer_mask: Option<Vec<usize>>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleFitResponse {
    pub name: String,
    pub manifold: StyleManifold<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Manifold,
    Strength,
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleSampleRequest {
    pub manifold: String,
    #[serde(default)]
    pub mode: SampleMode,
    /// Fixed lambdas; otherwise they are drawn uniformly from (-epsilon, epsilon).
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    /// Convex weights for `mode: convex`.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alpha_range: Option<(f64, f64)>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub latent: Option<LatentRef>,
    #[serde(default)]
    pub decode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSampleResponse {
    pub samples: Vec<StyleSample<f64>>,
    /// Mean pairwise `1 - cos` among the sampled directions.
    pub diversity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latents: Option<Vec<LatentCode64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<Vec<DecodedImage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_error: Option<ErrorDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyDecodeRequest {
    pub latent: LatentRef,
}
