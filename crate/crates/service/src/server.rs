use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use tokio::net::TcpListener;

use wplus::oracle::make_world;
use wplus::store::load_library;
use wplus::DirectionLibrary64;

use crate::bridge::{Bridge, BridgeError, DEFAULT_TIMEOUT};
use crate::routes::router;
use crate::state::AppState;

/// Environment variable that overrides `--bridge-url`.
pub const BRIDGE_URL_ENV: &str = "LATENT_BRIDGE_URL";

/// Planted world served through the in-process bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleSpec {
    pub seed: u64,
    pub layers: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: IpAddr,
    pub port: u16,
    pub library: Option<PathBuf>,
    pub bridge_url: Option<String>,
    pub bridge_timeout: Duration,
    pub oracle: Option<OracleSpec>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            library: None,
            bridge_url: None,
            bridge_timeout: DEFAULT_TIMEOUT,
            oracle: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot load library {}: {source}", path.display())]
    LibraryLoadError {
        path: PathBuf,
        #[source]
        source: wplus::Error,
    },
    #[error("bad bridge configuration: {0}")]
    Bridge(String),
}

/// The env var, when set and non-empty, takes precedence over the flag.
pub fn effective_bridge_url(flag: Option<String>) -> Option<String> {
    match std::env::var(BRIDGE_URL_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(v),
        _ => flag,
    }
}

/// A missing library file starts an empty library that is created on the
/// first write; an unreadable or invalid one is an error.
pub fn open_library(path: Option<&PathBuf>) -> Result<DirectionLibrary64, ServeError> {
    match path {
        Some(p) if p.exists() => load_library(p).map_err(|source| ServeError::LibraryLoadError {
            path: p.clone(),
            source,
        }),
        _ => Ok(DirectionLibrary64::new()),
    }
}

pub fn build_bridge(config: &ServeConfig) -> Result<Option<Bridge>, ServeError> {
    if let Some(url) = &config.bridge_url {
        return Bridge::http(url, config.bridge_timeout)
            .map(Some)
            .map_err(|e: BridgeError| ServeError::Bridge(e.to_string()));
    }
    match config.oracle {
        None => Ok(None),
        Some(spec) => {
            let world = make_world(spec.seed, spec.layers, spec.dim, 3, 8, 16)
                .map_err(|e| ServeError::Bridge(format!("oracle world: {e}")))?;
            Ok(Some(Bridge::oracle(world)))
        }
    }
}

pub struct Server {
    listener: TcpListener,
    app: Router,
    addr: SocketAddr,
}

impl Server {
    /// Load the library, set up the bridge and bind the port.
    pub async fn bind(config: ServeConfig) -> Result<Self, ServeError> {
        let library = open_library(config.library.as_ref())?;
        let bridge = build_bridge(&config)?;
        let state = Arc::new(AppState::new(library, config.library.clone(), bridge));
        let addr = SocketAddr::new(config.host, config.port);
        let listener = TcpListener::bind(addr).await.map_err(|source| {
            if source.kind() == std::io::ErrorKind::AddrInUse {
                ServeError::PortInUse(config.port)
            } else {
                ServeError::Bind { addr, source }
            }
        })?;
        let addr = listener
            .local_addr()
            .map_err(|source| ServeError::Bind { addr, source })?;
        Ok(Self {
            listener,
            app: router(state),
            addr,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn run(self) -> std::io::Result<()> {
        log::info!("listening on http://{}", self.addr);
        axum::serve(self.listener, self.app).await
    }

    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        log::info!("listening on http://{}", self.addr);
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await
    }
}
