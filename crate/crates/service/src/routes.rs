use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use wplus::direction::{estimate_direction, EditDirection, Method};
use wplus::edit::{apply_edit, apply_sequential, EditInstruction, DEFAULT_ALPHA, STYLE_EPSILON};
use wplus::store::{dataset_hash, decode_dataset, load_dataset, unix_now, Provenance};
use wplus::style::{
    apply_style, baseline_convex, baseline_strength, fit_manifold, sample_style, sample_style_random, style_diversity,
    StyleManifold,
};
use wplus::{assemble_dataset, style_preset, LatentCode64, LayerMask, PairDataset64};

use crate::api::*;
use crate::bridge::{BridgeError, DecodedImage, EncodeResponse, ImageRequest};
use crate::error::{ApiError, ErrorDetail};
use crate::state::AppState;

/// Request bodies up to this size are accepted (LFD1 uploads included).
pub const MAX_BODY: usize = 64 << 20;
const MAX_SAMPLES: usize = 10_000;

type Shared = State<Arc<AppState>>;

/// `Json` whose rejections come back as 400 with the usual error body.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| JsonBody(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/info", get(info))
        .route("/v1/directions", get(list_directions))
        .route("/v1/directions/estimate", post(estimate))
        .route("/v1/directions/{name}", get(get_entry))
        .route("/v1/edit", post(edit))
        .route("/v1/edit/sequential", post(sequential))
        .route("/v1/style/fit", post(style_fit))
        .route("/v1/style/sample", post(style_sample))
        .route("/v1/decode", post(decode))
        .route("/v1/encode", post(encode))
        .fallback(|uri: Uri| async move {
            ApiError::NotFound {
                kind: "route",
                name: uri.path().to_owned(),
            }
        })
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

async fn info(State(state): Shared) -> Json<ServiceInfo> {
    let library = state
        .read(|lib| LibraryInfo {
            path: state.library_path().cloned(),
            directions: lib.directions.len(),
            manifolds: lib.manifolds.len(),
        })
        .await;
    let bridge = match &state.bridge {
        None => None,
        Some(b) => Some(match b.info().await {
            Ok(info) => BridgeStatus {
                base_url: b.base_url(),
                info: Some(info),
                error: None,
            },
            Err(e) => BridgeStatus {
                base_url: b.base_url(),
                info: None,
                error: Some(ApiError::from(e).body().error),
            },
        }),
    };
    Json(ServiceInfo {
        name: "wplus".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        library,
        bridge,
    })
}

async fn list_directions(State(state): Shared) -> Json<Vec<EntrySummary>> {
    Json(
        state
            .read(|lib| {
                lib.directions
                    .iter()
                    .map(EntrySummary::from)
                    .chain(lib.manifolds.iter().map(EntrySummary::from))
                    .collect()
            })
            .await,
    )
}

async fn get_entry(State(state): Shared, Path(name): Path<String>) -> Result<Json<LibraryEntry>, ApiError> {
    state
        .read(|lib| {
            lib.direction(&name)
                .cloned()
                .map(LibraryEntry::Direction)
                .or_else(|| lib.manifold(&name).cloned().map(LibraryEntry::Manifold))
        })
        .await
        .map(Json)
        .ok_or(ApiError::NotFound { kind: "entry", name })
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Svd => "svd",
        Method::Mean => "mean",
    }
}

struct EstimateParams {
    name: String,
    attribute: Option<String>,
    method: Method,
    layer_mask: Option<Vec<usize>>,
    preset: Option<String>,
    overwrite: bool,
}

fn parse_indices(text: &str) -> Result<Vec<usize>, ApiError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("bad layer index '{s}'")))
        })
        .collect()
}

/// Accepts a JSON [`EstimateRequest`] or, with `Content-Type:
/// application/octet-stream`, a raw LFD1 pair container plus query parameters.
async fn estimate(
    State(state): Shared,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<EstimateResponse>, ApiError> {
    let binary = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/octet-stream"));
    let (params, dataset) = if binary {
        let Query(q) = Query::<EstimateQuery>::try_from_uri(&uri).map_err(|e| ApiError::bad_request(e.body_text()))?;
        let method = match q.method.as_deref() {
            None => Method::Svd,
            Some(m) => m.parse().map_err(ApiError::BadRequest)?,
        };
        let params = EstimateParams {
            name: q.name,
            attribute: q.attribute,
            method,
            layer_mask: q.layer_mask.as_deref().map(parse_indices).transpose()?,
            preset: q.preset,
            overwrite: q.overwrite,
        };
        (params, decode_dataset::<f64>(&body)?)
    } else {
        let req: EstimateRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let dataset = match (req.pairs, &req.dataset_path) {
            (Some(pairs), None) => {
                let label = req.attribute.as_deref().unwrap_or(&req.name);
                assemble_dataset(label, pairs.into_iter().map(|p| (p.positive, p.negative)).collect())?
            }
            (None, Some(path)) => load_dataset::<f64>(path)?,
            _ => return Err(ApiError::bad_request("give exactly one of `pairs` and `dataset_path`")),
        };
        let params = EstimateParams {
            name: req.name,
            attribute: req.attribute,
            method: req.method,
            layer_mask: req.layer_mask,
            preset: req.preset,
            overwrite: req.overwrite,
        };
        (params, dataset)
    };
    run_estimate(&state, params, &dataset).await.map(Json)
}

async fn run_estimate(state: &AppState, p: EstimateParams, ds: &PairDataset64) -> Result<EstimateResponse, ApiError> {
    let mask = requested_mask(ds.layers(), p.layer_mask.as_deref(), p.preset.as_deref())?
        .unwrap_or_else(|| LayerMask::all(ds.layers()));
    let mut direction = estimate_direction(ds, p.method, mask)?;
    if let Some(a) = p.attribute {
        direction.attribute = a;
    }
    let provenance = Provenance {
        source_hash: Some(dataset_hash(ds)),
        method: method_name(p.method).into(),
        created: unix_now(),
    };
    let (d, prov) = (direction.clone(), provenance.clone());
    state
        .update(|lib| Ok(lib.insert_direction(&p.name, d, prov, p.overwrite)?))
        .await?;
    Ok(EstimateResponse {
        name: p.name,
        warnings: direction.warnings.clone(),
        direction,
        provenance,
    })
}

async fn lookup_direction(state: &AppState, name: &str) -> Result<EditDirection<f64>, ApiError> {
    state
        .read(|lib| lib.direction(name).map(|d| d.direction.clone()))
        .await
        .ok_or_else(|| ApiError::NotFound {
            kind: "direction",
            name: name.to_owned(),
        })
}

async fn lookup_manifold(state: &AppState, name: &str) -> Result<StyleManifold<f64>, ApiError> {
    state
        .read(|lib| lib.manifold(name).map(|m| m.manifold.clone()))
        .await
        .ok_or_else(|| ApiError::NotFound {
            kind: "manifold",
            name: name.to_owned(),
        })
}

fn instruction(
    dir: EditDirection<f64>,
    alpha: Option<f64>,
    mask: Option<Vec<usize>>,
) -> Result<EditInstruction<f64>, ApiError> {
    let layers = dir.layers();
    let instr = EditInstruction::new(dir, alpha.unwrap_or(DEFAULT_ALPHA));
    Ok(match mask {
        Some(ix) => instr.with_mask(LayerMask::new(layers, ix)?),
        None => instr,
    })
}

/// Decode every latent when asked; a bridge failure is reported next to the
/// (still valid) edit result instead of replacing it.
async fn decode_all(
    state: &AppState,
    wanted: bool,
    latents: &[&LatentCode64],
) -> (Option<Vec<DecodedImage>>, Option<(StatusCode, ErrorDetail)>) {
    if !wanted {
        return (None, None);
    }
    let result = async {
        let bridge = state.bridge.as_ref().ok_or(BridgeError::NotConfigured)?;
        let mut images = Vec::with_capacity(latents.len());
        for w in latents {
            images.push(bridge.decode(w).await?);
        }
        Ok::<_, BridgeError>(images)
    }
    .await;
    match result {
        Ok(images) => (Some(images), None),
        Err(e) => {
            let e = ApiError::from(e);
            (None, Some((e.status(), e.body().error)))
        }
    }
}

fn respond<T: serde::Serialize>(failure: Option<StatusCode>, body: T) -> Response {
    (failure.unwrap_or(StatusCode::OK), Json(body)).into_response()
}

async fn edit(State(state): Shared, JsonBody(req): JsonBody<EditRequest>) -> Result<Response, ApiError> {
    let w = req.latent.resolve()?;
    let dir = lookup_direction(&state, &req.direction).await?;
    let latent = apply_edit(&w, &instruction(dir, req.alpha, req.layer_mask)?)?;
    let (images, failure) = decode_all(&state, req.decode, &[&latent]).await;
    let (status, bridge_error) = failure.unzip();
    Ok(respond(
        status,
        EditResponse {
            latent,
            image: images.and_then(|mut v| v.pop()),
            bridge_error,
        },
    ))
}

async fn sequential(State(state): Shared, JsonBody(req): JsonBody<SequentialRequest>) -> Result<Response, ApiError> {
    let w = req.latent.resolve()?;
    let mut instrs = Vec::with_capacity(req.steps.len());
    for (i, step) in req.steps.into_iter().enumerate() {
        let dir = lookup_direction(&state, &step.direction)
            .await
            .map_err(|_| ApiError::NotFound {
                kind: "direction",
                name: format!("{} (step {i})", step.direction),
            })?;
        instrs.push(instruction(dir, step.alpha, step.layer_mask).map_err(|e| match e {
            ApiError::Core(c) => ApiError::Core(wplus::Error::AtStep {
                index: i,
                source: Box::new(c),
            }),
            other => other,
        })?);
    }
    let result = apply_sequential(&w, &instrs)?;
    let (images, failure) = decode_all(&state, req.decode, &[&result.latent]).await;
    let (status, bridge_error) = failure.unzip();
    Ok(respond(
        status,
        SequentialResponse {
            latent: result.latent,
            intermediates: req.intermediates.then_some(result.intermediates),
            image: images.and_then(|mut v| v.pop()),
            bridge_error,
        },
    ))
}

async fn style_fit(
    State(state): Shared,
    JsonBody(req): JsonBody<StyleFitRequest>,
) -> Result<Json<StyleFitResponse>, ApiError> {
    let (styles, layers, default_mask, default_attr) = match (&req.directions, req.styles) {
        (Some(names), None) => {
            let mut dirs = Vec::with_capacity(names.len());
            for n in names {
                dirs.push(lookup_direction(&state, n).await?);
            }
            let first = dirs
                .first()
                .ok_or_else(|| ApiError::bad_request("`directions` is empty"))?;
            let (layers, mask, attr) = (first.layers(), first.layer_mask.clone(), first.attribute.clone());
            (
                dirs.into_iter().map(|d| d.direction).collect::<Vec<_>>(),
                layers,
                Some(mask),
                Some(attr),
            )
        }
        (None, Some(styles)) => {
            let layers = req
                .layers
                .ok_or_else(|| ApiError::bad_request("inline `styles` need `layers`"))?;
            (styles, layers, None, None)
        }
        _ => return Err(ApiError::bad_request("give exactly one of `directions` and `styles`")),
    };
    let mask = requested_mask(layers, req.layer_mask.as_deref(), req.preset.as_deref())?
        .or(default_mask)
        .unwrap_or_else(|| LayerMask::all(layers));
    let attribute = req.attribute.or(default_attr).unwrap_or_else(|| req.name.clone());
    let manifold = fit_manifold(&attribute, &styles, mask)?;
    let provenance = Provenance {
        source_hash: None,
        method: "svd".into(),
        created: unix_now(),
    };
    let (m, prov) = (manifold.clone(), provenance.clone());
    state
        .update(|lib| Ok(lib.insert_manifold(&req.name, m, prov, req.overwrite)?))
        .await?;
    Ok(Json(StyleFitResponse {
        name: req.name,
        manifold,
        provenance,
    }))
}

/// Resolved sampling knobs: explicit request values, then the attribute's
/// style preset, then the global defaults.
pub struct SampleSettings {
    pub epsilon: f64,
    pub alpha_range: (f64, f64),
    pub alpha: f64,
    pub count: usize,
    pub seed: u64,
}

pub fn sample_settings(attribute: &str, req: &StyleSampleRequest) -> SampleSettings {
    let preset = style_preset(attribute);
    let alpha_range = req
        .alpha_range
        .or(preset.map(|p| p.alpha_range))
        .unwrap_or((DEFAULT_ALPHA, DEFAULT_ALPHA));
    SampleSettings {
        epsilon: req.epsilon.or(preset.map(|p| p.epsilon)).unwrap_or(STYLE_EPSILON),
        alpha_range,
        alpha: req.alpha.unwrap_or(0.5 * (alpha_range.0 + alpha_range.1)),
        count: req.count.unwrap_or(1),
        seed: req.seed.unwrap_or(0),
    }
}

async fn style_sample(State(state): Shared, JsonBody(req): JsonBody<StyleSampleRequest>) -> Result<Response, ApiError> {
    let m = lookup_manifold(&state, &req.manifold).await?;
    let s = sample_settings(&m.attribute, &req);
    if s.count > MAX_SAMPLES {
        return Err(ApiError::bad_request(format!("count is limited to {MAX_SAMPLES}")));
    }
    let samples = match req.mode {
        SampleMode::Manifold => match &req.lambdas {
            Some(l) => vec![sample_style(&m, l, s.epsilon, s.alpha)?],
            None => sample_style_random(&m, s.epsilon, s.alpha_range, s.count, s.seed)?,
        },
        SampleMode::Strength => baseline_strength(&m, s.alpha_range, s.count, s.seed)?,
        SampleMode::Convex => {
            let w = req
                .weights
                .as_ref()
                .ok_or_else(|| ApiError::bad_request("convex sampling needs `weights`"))?;
            vec![baseline_convex(&m, w, s.alpha)?]
        }
    };
    let diversity = style_diversity(&samples)?;
    let latents = match &req.latent {
        Some(r) => {
            let w = r.resolve()?;
            Some(
                samples
                    .iter()
                    .map(|sample| apply_style(&w, &m, sample))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
        None if req.decode => return Err(ApiError::bad_request("`decode` needs a `latent` to edit")),
        None => None,
    };
    let refs: Vec<&LatentCode64> = latents.iter().flatten().collect();
    let (images, failure) = decode_all(&state, req.decode, &refs).await;
    let (status, bridge_error) = failure.unzip();
    Ok(respond(
        status,
        StyleSampleResponse {
            samples,
            diversity,
            latents,
            images,
            bridge_error,
        },
    ))
}

async fn decode(
    State(state): Shared,
    JsonBody(req): JsonBody<ProxyDecodeRequest>,
) -> Result<Json<DecodedImage>, ApiError> {
    let bridge = state.bridge.as_ref().ok_or(BridgeError::NotConfigured)?;
    let w = req.latent.resolve()?;
    Ok(Json(bridge.decode(&w).await?))
}

async fn encode(State(state): Shared, JsonBody(req): JsonBody<ImageRequest>) -> Result<Json<EncodeResponse>, ApiError> {
    let bridge = state.bridge.as_ref().ok_or(BridgeError::NotConfigured)?;
    Ok(Json(EncodeResponse {
        latent: bridge.encode(&req.png_base64).await?,
    }))
}
