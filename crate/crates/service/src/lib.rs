//! HTTP service, decoder bridge client and command line for `wplus`.

pub mod api;
pub mod bridge;
pub mod cli;
pub mod error;
pub mod routes;
pub mod server;
pub mod state;

pub use bridge::{Bridge, BridgeError, BridgeInfo};
pub use error::ApiError;
pub use routes::router;
pub use server::{ServeConfig, ServeError, Server};
pub use state::AppState;
