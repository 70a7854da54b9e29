use std::path::PathBuf;

use tokio::sync::RwLock;

use wplus::store::save_library;
use wplus::DirectionLibrary64;

use crate::bridge::Bridge;
use crate::error::ApiError;

/// The direction library (single writer, many readers) and the optional bridge.
#[derive(Debug)]
pub struct AppState {
    library: RwLock<DirectionLibrary64>,
    library_path: Option<PathBuf>,
    pub bridge: Option<Bridge>,
}

impl AppState {
    pub fn new(library: DirectionLibrary64, library_path: Option<PathBuf>, bridge: Option<Bridge>) -> Self {
        Self {
            library: RwLock::new(library),
            library_path,
            bridge,
        }
    }

    pub fn library_path(&self) -> Option<&PathBuf> {
        self.library_path.as_ref()
    }

    pub async fn read<R>(&self, f: impl FnOnce(&DirectionLibrary64) -> R) -> R {
        f(&*self.library.read().await)
    }

    /// Apply `f` to a copy of the library, persist it, then publish it. A
    /// failed change or save leaves the served library untouched.
    pub async fn update<R>(
        &self,
        f: impl FnOnce(&mut DirectionLibrary64) -> Result<R, ApiError>,
    ) -> Result<R, ApiError> {
        let mut guard = self.library.write().await;
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if let Some(path) = &self.library_path {
            save_library(path, &next).map_err(|e| ApiError::Persist(e.to_string()))?;
        }
        *guard = next;
        Ok(out)
    }
}
