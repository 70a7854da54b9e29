#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use wplus::{LatentCode64, RasterImage};
use wplus_service::bridge::{BridgeInfo, Capabilities, DecodeRequest, DecodedImage, EncodeResponse, ImageRequest};
use wplus_service::{ServeConfig, Server};

use wplus::direction::{estimate_direction, Method};
use wplus::edit::{apply_edit, apply_sequential, EditInstruction};
use wplus::oracle::{generate_pairs, make_world, PairSpec};
use wplus::store::{decode_dataset, encode_dataset, load_library};
use wplus::style::{apply_style, baseline_convex, baseline_strength, fit_manifold, sample_style, sample_style_random};
use wplus::{assemble_dataset, normalize, FlatVector64, LayerMask};
use wplus_service::api::{
    EditResponse, EstimateResponse, LibraryEntry, PairWire, SequentialResponse, StyleFitResponse, StyleSampleResponse,
};

pub struct Running {
    pub url: String,
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

pub async fn serve(config: ServeConfig) -> Running {
    let server = Server::bind(ServeConfig { port: 0, ..config }).await.expect("bind");
    let addr = server.local_addr();
    let (tx, rx) = oneshot::channel();
    tokio::spawn(server.run_until(async {
        let _ = rx.await;
    }));
    Running {
        url: format!("http://{addr}"),
        addr,
        stop: Some(tx),
    }
}

pub fn client() -> reqwest::Client {
    reqwest::Client::new()
}

/// Decoder sidecar stand-in: the latent's f32 bytes are packed into RGB
/// pixels, so encode is the exact inverse of decode up to f32 rounding.
#[derive(Clone)]
pub struct Mock {
    pub layers: usize,
    pub dim: usize,
    pub delay: Duration,
    pub encode: bool,
}

pub const MOCK_WIDTH: usize = 32;

pub fn pack(w: &LatentCode64) -> RasterImage {
    let mut bytes: Vec<u8> = w.as_slice().iter().flat_map(|x| (*x as f32).to_le_bytes()).collect();
    let pixels = bytes.len().div_ceil(3);
    let height = pixels.div_ceil(MOCK_WIDTH);
    bytes.resize(MOCK_WIDTH * height * 3, 0);
    RasterImage::new(MOCK_WIDTH, height, bytes).expect("pack")
}

pub fn unpack(img: &RasterImage, layers: usize, dim: usize) -> Option<LatentCode64> {
    let n = layers * dim;
    let bytes = img.as_bytes();
    if bytes.len() < 4 * n {
        return None;
    }
    let data = bytes[..4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    LatentCode64::from_flat(layers, dim, data).ok()
}

type Reply<T> = Result<Json<T>, (StatusCode, String)>;

async fn mock_info(State(m): State<Arc<Mock>>) -> Json<BridgeInfo> {
    Json(BridgeInfo {
        name: "mock".into(),
        layers: m.layers,
        dim: m.dim,
        capabilities: Capabilities {
            decode: true,
            encode: m.encode,
            embed: false,
        },
    })
}

async fn mock_decode(State(m): State<Arc<Mock>>, Json(req): Json<DecodeRequest>) -> Reply<DecodedImage> {
    tokio::time::sleep(m.delay).await;
    if req.latent.shape() != (m.layers, m.dim) {
        return Err((
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("expected {}x{}", m.layers, m.dim),
        ));
    }
    Ok(Json(DecodedImage::from_image(&pack(&req.latent)).unwrap()))
}

async fn mock_encode(State(m): State<Arc<Mock>>, Json(req): Json<ImageRequest>) -> Reply<EncodeResponse> {
    let bad = |e: String| (StatusCode::BAD_REQUEST, e);
    let bytes = B64.decode(&req.png_base64).map_err(|e| bad(e.to_string()))?;
    let img = RasterImage::decode_png(&bytes).map_err(|e| bad(e.to_string()))?;
    let latent = unpack(&img, m.layers, m.dim).ok_or_else(|| bad("image too small".into()))?;
    Ok(Json(EncodeResponse { latent }))
}

pub async fn mock_bridge(mock: Mock) -> (String, oneshot::Sender<()>) {
    let app = Router::new()
        .route("/v1/info", get(mock_info))
        .route("/v1/decode", post(mock_decode))
        .route("/v1/encode", post(mock_encode))
        .with_state(Arc::new(mock));
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel::<()>();
    tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
            .unwrap();
    });
    (format!("http://{addr}"), tx)
}

/// An address nothing listens on.
pub async fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}

pub async fn post_ok<B: Serialize, R: DeserializeOwned>(c: &reqwest::Client, url: &str, body: &B) -> Result<R, String> {
    let resp = c.post(url).json(body).send().await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    if !status.is_success() {
        return Err(format!("{url}: {status} {text}"));
    }
    serde_json::from_str(&text).map_err(|e| format!("{url}: {e}"))
}

/// Equal values and byte-equal canonical JSON.
fn same<T: Serialize + PartialEq + std::fmt::Debug>(got: &T, want: &T, what: &str) -> Result<(), String> {
    let (a, b) = (serde_json::to_vec(got).unwrap(), serde_json::to_vec(want).unwrap());
    if got != want || a != b {
        return Err(format!("{what}: service and library disagree"));
    }
    Ok(())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Runs a fixed corpus through the HTTP API and the library in process;
/// returns the number of compared responses.
pub async fn api_equivalence() -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let lib_path = dir.path().join("library.json");
    let running = serve(ServeConfig {
        library: Some(lib_path.clone()),
        ..ServeConfig::default()
    })
    .await;
    let c = client();
    let at = |p: &str| format!("{}{p}", running.url);
    let (layers, dim) = (4, 16);
    let world = make_world::<f64>(11, layers, dim, 3, 8, 16).map_err(err)?;
    let mut checks = 0;

    let mut estimated = Vec::new();
    for j in 0..3 {
        let ds = generate_pairs(&world, &PairSpec::new(j, 12, 0.1, 40 + j as u64)).map_err(err)?;
        let name = format!("attr{j}");
        let pairs: Vec<PairWire> = ds
            .pairs()
            .iter()
            .map(|(p, n)| PairWire {
                positive: p.clone(),
                negative: n.clone(),
            })
            .collect();
        let got: EstimateResponse = post_ok(
            &c,
            &at("/v1/directions/estimate"),
            &json!({ "name": name, "pairs": pairs }),
        )
        .await?;
        let relabeled = assemble_dataset(&name, ds.pairs().to_vec()).map_err(err)?;
        let want = estimate_direction(&relabeled, Method::Svd, LayerMask::all(layers)).map_err(err)?;
        same(&got.direction, &want, "estimate")?;
        checks += 1;
        estimated.push(want);

        // raw LFD1 upload, mean baseline, explicit mask
        let resp = c
            .post(at(&format!(
                "/v1/directions/estimate?name={name}_mean&method=mean&layer_mask=0,2"
            )))
            .header("content-type", "application/octet-stream")
            .body(encode_dataset(&ds))
            .send()
            .await
            .map_err(err)?;
        if !resp.status().is_success() {
            return Err(format!("binary estimate: {}", resp.status()));
        }
        let got: EstimateResponse = resp.json().await.map_err(err)?;
        // the upload carries f32 payloads
        let ds = decode_dataset::<f64>(&encode_dataset(&ds)).map_err(err)?;
        let want = estimate_direction(&ds, Method::Mean, LayerMask::new(layers, [0, 2]).map_err(err)?).map_err(err)?;
        same(&got.direction, &want, "estimate (binary, mean)")?;
        checks += 1;
    }

    let entry: LibraryEntry = c
        .get(at("/v1/directions/attr1"))
        .send()
        .await
        .map_err(err)?
        .json()
        .await
        .map_err(err)?;
    match entry {
        LibraryEntry::Direction(d) => same(&d.direction, &estimated[1], "library entry")?,
        LibraryEntry::Manifold(_) => return Err("attr1 listed as a manifold".into()),
    }
    checks += 1;

    let latents: Vec<_> = generate_pairs(&world, &PairSpec::new(0, 5, 0.0, 77))
        .map_err(err)?
        .pairs()
        .iter()
        .map(|(_, n)| n.clone())
        .collect();
    for (i, w) in latents.iter().enumerate() {
        for alpha in [-2.0, 0.0, 0.5, 3.0] {
            let mask = (i % 2 == 1).then(|| vec![1, 2]);
            let got: EditResponse = post_ok(
                &c,
                &at("/v1/edit"),
                &json!({ "latent": w, "direction": "attr1", "alpha": alpha, "layer_mask": mask }),
            )
            .await?;
            let mut instr = EditInstruction::new(estimated[1].clone(), alpha);
            if let Some(m) = &mask {
                instr = instr.with_mask(LayerMask::new(layers, m.iter().copied()).map_err(err)?);
            }
            same(&got.latent, &apply_edit(w, &instr).map_err(err)?, "edit")?;
            checks += 1;
        }

        let got: SequentialResponse = post_ok(
            &c,
            &at("/v1/edit/sequential"),
            &json!({
                "latent": w,
                "intermediates": true,
                "steps": [
                    { "direction": "attr0", "alpha": 1.5 },
                    { "direction": "attr2", "alpha": -1.0, "layer_mask": [0] },
                    { "direction": "attr1" },
                ],
            }),
        )
        .await?;
        let want = apply_sequential(
            w,
            &[
                EditInstruction::new(estimated[0].clone(), 1.5),
                EditInstruction::new(estimated[2].clone(), -1.0).with_mask(LayerMask::new(layers, [0]).map_err(err)?),
                EditInstruction::new(estimated[1].clone(), 1.0),
            ],
        )
        .map_err(err)?;
        same(&got.latent, &want.latent, "sequential")?;
        same(
            &got.intermediates,
            &Some(want.intermediates),
            "sequential intermediates",
        )?;
        checks += 1;
    }

    // five styles on a ring around the first planted attribute
    let a = &world.attributes;
    let styles: Vec<FlatVector64> = (0..5)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 5.0;
            let v = a[0]
                .add(&a[1].scaled(0.5 * t.cos()))
                .and_then(|v| v.add(&a[2].scaled(0.5 * t.sin())))?;
            normalize(&v)
        })
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let got: StyleFitResponse = post_ok(
        &c,
        &at("/v1/style/fit"),
        &json!({ "name": "ring", "styles": styles, "layers": layers }),
    )
    .await?;
    let m = fit_manifold("ring", &styles, LayerMask::all(layers)).map_err(err)?;
    same(&got.manifold, &m, "style fit")?;
    checks += 1;

    let got: StyleSampleResponse = post_ok(
        &c,
        &at("/v1/style/sample"),
        &json!({ "manifold": "ring", "count": 6, "seed": 9, "epsilon": 0.3, "alpha_range": [0.5, 1.5], "latent": latents[0] }),
    )
    .await?;
    let want = sample_style_random(&m, 0.3, (0.5, 1.5), 6, 9).map_err(err)?;
    same(&got.samples, &want, "style sample")?;
    let edited = want
        .iter()
        .map(|s| apply_style(&latents[0], &m, s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    same(&got.latents, &Some(edited), "styled latents")?;
    checks += 1;

    let lambdas = [0.1, -0.2, 0.05, 0.0, 0.25];
    let got: StyleSampleResponse = post_ok(
        &c,
        &at("/v1/style/sample"),
        &json!({ "manifold": "ring", "lambdas": lambdas, "epsilon": 0.3, "alpha": 2.0 }),
    )
    .await?;
    same(
        &got.samples,
        &vec![sample_style(&m, &lambdas, 0.3, 2.0).map_err(err)?],
        "fixed lambdas",
    )?;
    checks += 1;

    let got: StyleSampleResponse = post_ok(
        &c,
        &at("/v1/style/sample"),
        &json!({ "manifold": "ring", "mode": "strength", "count": 4, "seed": 3, "alpha_range": [0.5, 2.0] }),
    )
    .await?;
    same(
        &got.samples,
        &baseline_strength(&m, (0.5, 2.0), 4, 3).map_err(err)?,
        "strength baseline",
    )?;
    checks += 1;

    let weights = [0.5, 0.2, 0.1, 0.1, 0.1];
    let got: StyleSampleResponse = post_ok(
        &c,
        &at("/v1/style/sample"),
        &json!({ "manifold": "ring", "mode": "convex", "weights": weights, "alpha": 1.0 }),
    )
    .await?;
    same(
        &got.samples,
        &vec![baseline_convex(&m, &weights, 1.0).map_err(err)?],
        "convex baseline",
    )?;
    checks += 1;

    // the persisted library is what was served
    let saved = load_library::<f64>(&lib_path).map_err(err)?;
    if saved.directions.len() != 6 || saved.manifolds.len() != 1 {
        return Err("persisted library is missing entries".into());
    }
    same(
        &saved.direction("attr2").unwrap().direction,
        &estimated[2],
        "persisted direction",
    )?;
    same(&saved.manifold("ring").unwrap().manifold, &m, "persisted manifold")?;
    checks += 1;
    Ok(checks)
}
