//! Decoder bridge: the boundary behind which a generator decodes latents to
//! images, encodes images to latents and embeds images for identity metrics.
//!
//! Two implementations: an HTTP client for an external sidecar, and an
//! in-process bridge over a planted oracle world whose "images" are test
//! cards of the decoded feature vector.

use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tokio::sync::OnceCell;

use wplus::oracle::{decode as oracle_decode, PlantedWorld};
use wplus::{LatentCode64, RasterImage};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub decode: bool,
    pub encode: bool,
    pub embed: bool,
}

impl Capabilities {
    fn names(self) -> Vec<&'static str> {
        [("decode", self.decode), ("encode", self.encode), ("embed", self.embed)]
            .into_iter()
            .filter_map(|(n, on)| on.then_some(n))
            .collect()
    }
}

// Written as a list of names; read from either a list or a {name: bool} object.
impl Serialize for Capabilities {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.names().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Capabilities {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<String>),
            Flags {
                #[serde(default)]
                decode: bool,
                #[serde(default)]
                encode: bool,
                #[serde(default)]
                embed: bool,
            },
        }
        Ok(match Raw::deserialize(d)? {
            Raw::List(names) => Capabilities {
                decode: names.iter().any(|n| n == "decode"),
                encode: names.iter().any(|n| n == "encode"),
                embed: names.iter().any(|n| n == "embed"),
            },
            Raw::Flags { decode, encode, embed } => Capabilities { decode, encode, embed },
        })
    }
}

/// `GET /v1/info` of a bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeInfo {
    pub name: String,
    pub layers: usize,
    pub dim: usize,
    pub capabilities: Capabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub latent: LatentCode64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedImage {
    pub png_base64: String,
    pub width: usize,
    pub height: usize,
}

impl DecodedImage {
    pub fn from_image(img: &RasterImage) -> Result<Self, BridgeError> {
        let png = img.encode_png().map_err(|e| BridgeError::Protocol(e.to_string()))?;
        Ok(Self {
            png_base64: B64.encode(png),
            width: img.width(),
            height: img.height(),
        })
    }

    /// Decode the PNG and check it against the advertised size.
    pub fn to_image(&self) -> Result<RasterImage, BridgeError> {
        let bytes = B64
            .decode(&self.png_base64)
            .map_err(|e| BridgeError::Protocol(format!("png_base64: {e}")))?;
        let img = RasterImage::decode_png(&bytes).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        if (img.width(), img.height()) != (self.width, self.height) {
            return Err(BridgeError::Protocol(format!(
                "image is {}x{}, response says {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        Ok(img)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub png_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub latent: LatentCode64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BridgeError {
    #[error("no decoder bridge is configured")]
    NotConfigured,
    #[error("bridge unavailable: {0}")]
    Unavailable(String),
    #[error("bridge protocol error: {0}")]
    Protocol(String),
    #[error("bridge rejected the request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("bridge failed ({status}): {message}")]
    Failed { status: u16, message: String },
    #[error("latent is {}x{}, bridge expects {}x{}", got.0, got.1, expected.0, expected.1)]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("bridge does not support {0}")]
    Unsupported(&'static str),
}

impl BridgeError {
    pub fn status(&self) -> StatusCode {
        match self {
            BridgeError::Rejected { .. } | BridgeError::ShapeMismatch { .. } => StatusCode::BAD_REQUEST,
            BridgeError::Unsupported(_) => StatusCode::NOT_IMPLEMENTED,
            _ => StatusCode::BAD_GATEWAY,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BridgeError::NotConfigured | BridgeError::Unavailable(_) => "bridge_unavailable",
            BridgeError::Protocol(_) => "bridge_protocol",
            BridgeError::Rejected { .. } => "bridge_rejected",
            BridgeError::Failed { .. } => "bridge_failed",
            BridgeError::ShapeMismatch { .. } => "shape_mismatch",
            BridgeError::Unsupported(_) => "unsupported",
        }
    }
}

#[derive(Debug)]
pub struct HttpBridge {
    base_url: String,
    client: reqwest::Client,
    info: OnceCell<BridgeInfo>,
}

impl HttpBridge {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BridgeError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BridgeError::Protocol(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            client,
            info: OnceCell::new(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn transport(e: reqwest::Error) -> BridgeError {
        if e.is_timeout() {
            BridgeError::Unavailable(format!("timed out: {e}"))
        } else {
            BridgeError::Unavailable(e.to_string())
        }
    }

    async fn read<R: DeserializeOwned>(resp: reqwest::Response) -> Result<R, BridgeError> {
        let status = resp.status();
        if !status.is_success() {
            let message = resp.text().await.unwrap_or_default();
            let status = status.as_u16();
            return Err(if (400..500).contains(&status) {
                BridgeError::Rejected { status, message }
            } else {
                BridgeError::Failed { status, message }
            });
        }
        let bytes = resp.bytes().await.map_err(Self::transport)?;
        serde_json::from_slice(&bytes).map_err(|e| BridgeError::Protocol(e.to_string()))
    }

    async fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, BridgeError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base_url))
            .json(body)
            .send()
            .await
            .map_err(Self::transport)?;
        Self::read(resp).await
    }

    async fn fetch_info(&self) -> Result<BridgeInfo, BridgeError> {
        let resp = self
            .client
            .get(format!("{}/v1/info", self.base_url))
            .send()
            .await
            .map_err(Self::transport)?;
        let info: BridgeInfo = Self::read(resp).await?;
        if info.layers == 0 || info.dim == 0 {
            return Err(BridgeError::Protocol(format!(
                "bridge reports a {}x{} latent shape",
                info.layers, info.dim
            )));
        }
        Ok(info)
    }

    /// Posts without the local shape check; used to probe the bridge's own
    /// error mapping.
    pub async fn decode_unchecked(&self, w: &LatentCode64) -> Result<DecodedImage, BridgeError> {
        self.post("/v1/decode", &DecodeRequest { latent: w.clone() }).await
    }
}

/// Planted-world bridge: decoding is the world's affine map rendered as a
/// test card, embedding reads the identity block back out of the card.
#[derive(Debug, Clone)]
pub struct OracleBridge {
    world: Arc<PlantedWorld<f64>>,
}

const STRIPE_WIDTH: usize = 4;
const CARD_HEIGHT: usize = 16;

fn quantize(v: f64) -> u8 {
    (255.0 * (0.5 + 0.5 * v.tanh())).round() as u8
}

fn dequantize(b: u8) -> f64 {
    let t = (f64::from(b) / 255.0 - 0.5) * 2.0;
    t.clamp(-0.999_999, 0.999_999).atanh()
}

/// One vertical stripe per feature; the top half carries the squashed value,
/// the bottom half alternates so stripe boundaries stay visible.
pub fn test_card(features: &[f64]) -> RasterImage {
    let width = features.len().max(1) * STRIPE_WIDTH;
    let mut data = Vec::with_capacity(width * CARD_HEIGHT * 3);
    for y in 0..CARD_HEIGHT {
        for x in 0..width {
            let k = x / STRIPE_WIDTH;
            let b = features.get(k).map_or(0, |&v| quantize(v));
            if y < CARD_HEIGHT / 2 {
                data.extend_from_slice(&[b, b, 255 - b]);
            } else {
                let shade = if k % 2 == 0 { 40 } else { 200 };
                data.extend_from_slice(&[shade, shade, shade]);
            }
        }
    }
    RasterImage::new(width, CARD_HEIGHT, data).expect("card buffer size")
}

impl OracleBridge {
    pub fn new(world: PlantedWorld<f64>) -> Self {
        Self { world: Arc::new(world) }
    }

    pub fn world(&self) -> &PlantedWorld<f64> {
        &self.world
    }

    fn info(&self) -> BridgeInfo {
        BridgeInfo {
            name: format!("oracle-{}", self.world.seed),
            layers: self.world.layers,
            dim: self.world.dim,
            capabilities: Capabilities {
                decode: true,
                encode: false,
                embed: true,
            },
        }
    }

    fn decode(&self, w: &LatentCode64) -> Result<DecodedImage, BridgeError> {
        let features = oracle_decode(&self.world, w).map_err(|e| BridgeError::Rejected {
            status: 400,
            message: e.to_string(),
        })?;
        DecodedImage::from_image(&test_card(features.as_slice()))
    }

    fn embed(&self, png_base64: &str) -> Result<Vec<f64>, BridgeError> {
        let bytes = B64.decode(png_base64).map_err(|e| BridgeError::Rejected {
            status: 400,
            message: e.to_string(),
        })?;
        let img = RasterImage::decode_png(&bytes).map_err(|e| BridgeError::Rejected {
            status: 400,
            message: e.to_string(),
        })?;
        let q = self.world.identity_rank();
        if img.width() < q * STRIPE_WIDTH || img.height() == 0 {
            return Err(BridgeError::Rejected {
                status: 400,
                message: "image is not a test card of this world".into(),
            });
        }
        Ok((0..q).map(|k| dequantize(img.pixel(k * STRIPE_WIDTH, 0)[0])).collect())
    }
}

#[derive(Debug, Clone)]
pub enum Bridge {
    Http(Arc<HttpBridge>),
    Oracle(OracleBridge),
}

impl Bridge {
    pub fn http(base_url: &str, timeout: Duration) -> Result<Self, BridgeError> {
        Ok(Bridge::Http(Arc::new(HttpBridge::new(base_url, timeout)?)))
    }

    pub fn oracle(world: PlantedWorld<f64>) -> Self {
        Bridge::Oracle(OracleBridge::new(world))
    }

    pub fn base_url(&self) -> String {
        match self {
            Bridge::Http(h) => h.base_url().to_owned(),
            Bridge::Oracle(o) => format!("in-process:oracle-{}", o.world.seed),
        }
    }

    pub async fn info(&self) -> Result<BridgeInfo, BridgeError> {
        match self {
            Bridge::Http(h) => h.info.get_or_try_init(|| h.fetch_info()).await.cloned(),
            Bridge::Oracle(o) => Ok(o.info()),
        }
    }

    async fn require(&self, capability: &'static str) -> Result<BridgeInfo, BridgeError> {
        let info = self.info().await?;
        let ok = match capability {
            "decode" => info.capabilities.decode,
            "encode" => info.capabilities.encode,
            _ => info.capabilities.embed,
        };
        if ok {
            Ok(info)
        } else {
            Err(BridgeError::Unsupported(capability))
        }
    }

    pub async fn decode(&self, w: &LatentCode64) -> Result<DecodedImage, BridgeError> {
        let info = self.require("decode").await?;
        if w.shape() != (info.layers, info.dim) {
            return Err(BridgeError::ShapeMismatch {
                expected: (info.layers, info.dim),
                got: w.shape(),
            });
        }
        let image = match self {
            Bridge::Http(h) => h.decode_unchecked(w).await?,
            Bridge::Oracle(o) => o.decode(w)?,
        };
        image.to_image()?;
        Ok(image)
    }

    pub async fn encode(&self, png_base64: &str) -> Result<LatentCode64, BridgeError> {
        let info = self.require("encode").await?;
        let latent = match self {
            Bridge::Http(h) => {
                let r: EncodeResponse = h
                    .post(
                        "/v1/encode",
                        &ImageRequest {
                            png_base64: png_base64.to_owned(),
                        },
                    )
                    .await?;
                r.latent
            }
            Bridge::Oracle(_) => return Err(BridgeError::Unsupported("encode")),
        };
        if latent.shape() != (info.layers, info.dim) {
            return Err(BridgeError::Protocol(format!(
                "encoded latent is {}x{}, bridge advertises {}x{}",
                latent.layers(),
                latent.dim(),
                info.layers,
                info.dim
            )));
        }
        Ok(latent)
    }

    pub async fn embed(&self, png_base64: &str) -> Result<Vec<f64>, BridgeError> {
        self.require("embed").await?;
        match self {
            Bridge::Http(h) => {
                let r: EmbedResponse = h
                    .post(
                        "/v1/embed",
                        &ImageRequest {
                            png_base64: png_base64.to_owned(),
                        },
                    )
                    .await?;
                Ok(r.vector)
            }
            Bridge::Oracle(o) => o.embed(png_base64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Protocol checks any bridge should pass: sane info, deterministic decode of
/// a valid PNG at the advertised size, typed rejection of a wrong-shape
/// latent, and encode/decode round trip within `tolerance` when supported.
pub async fn check_conformance(bridge: &Bridge, tolerance: f64) -> Vec<ConformanceCheck> {
    let mut out = Vec::new();
    let mut record = |name: &str, result: Result<String, String>| {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        out.push(ConformanceCheck {
            name: name.to_owned(),
            passed,
            detail,
        });
    };

    let info = match bridge.info().await {
        Ok(info) => {
            record("info", Ok(format!("{} {}x{}", info.name, info.layers, info.dim)));
            info
        }
        Err(e) => {
            record("info", Err(e.to_string()));
            return out;
        }
    };

    let probe = LatentCode64::from_flat(
        info.layers,
        info.dim,
        (0..info.layers * info.dim)
            .map(|i| ((i % 7) as f64 - 3.0) * 0.05)
            .collect(),
    )
    .expect("probe shape");

    if info.capabilities.decode {
        let first = bridge.decode(&probe).await;
        let second = bridge.decode(&probe).await;
        record(
            "decode",
            match (&first, &second) {
                (Ok(a), Ok(b)) if a == b => Ok(format!("{}x{} png, deterministic", a.width, a.height)),
                (Ok(_), Ok(_)) => Err("repeated decode differs".into()),
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            },
        );

        let wrong = LatentCode64::zeros(info.layers + 1, info.dim).expect("shape");
        let result = match bridge {
            Bridge::Http(h) => h.decode_unchecked(&wrong).await,
            Bridge::Oracle(o) => o.decode(&wrong),
        };
        record(
            "shape_error",
            match result {
                Err(BridgeError::Rejected { status, .. }) => Ok(format!("rejected with {status}")),
                Err(e) => Err(format!("expected a 4xx rejection, got {e}")),
                Ok(_) => Err("wrong-shape latent was decoded".into()),
            },
        );

        if info.capabilities.encode {
            let round = async {
                let img = bridge.decode(&probe).await?;
                bridge.encode(&img.png_base64).await
            }
            .await;
            record(
                "round_trip",
                match round {
                    Ok(w) => {
                        let err = w
                            .as_slice()
                            .iter()
                            .zip(probe.as_slice())
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        if err <= tolerance {
                            Ok(format!("max error {err:e}"))
                        } else {
                            Err(format!("max error {err:e} exceeds {tolerance:e}"))
                        }
                    }
                    Err(e) => Err(e.to_string()),
                },
            );
        }
    }
    out
}
