//! JSON direction library.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::direction::EditDirection;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::style::StyleManifold;

use super::write_atomic;

pub const LIBRARY_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex SHA-256 of the source dataset's LFD1 encoding, if known.
    #[serde(default)]
    pub source_hash: Option<String>,
    pub method: String,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LibraryDirection<T: Scalar> {
    pub name: String,
    pub provenance: Provenance,
    pub direction: EditDirection<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LibraryManifold<T: Scalar> {
    pub name: String,
    pub provenance: Provenance,
    pub manifold: StyleManifold<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DirectionLibrary<T: Scalar> {
    pub version: u64,
    #[serde(default)]
    pub directions: Vec<LibraryDirection<T>>,
    #[serde(default)]
    pub manifolds: Vec<LibraryManifold<T>>,
}

impl<T: Scalar> Default for DirectionLibrary<T> {
    fn default() -> Self {
        Self {
            version: LIBRARY_VERSION,
            directions: Vec::new(),
            manifolds: Vec::new(),
        }
    }
}

impl<T: Scalar> DirectionLibrary<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn name_taken(&self, name: &str) -> bool {
        self.directions.iter().any(|d| d.name == name) || self.manifolds.iter().any(|m| m.name == name)
    }

    pub fn direction(&self, name: &str) -> Option<&LibraryDirection<T>> {
        self.directions.iter().find(|d| d.name == name)
    }

    pub fn manifold(&self, name: &str) -> Option<&LibraryManifold<T>> {
        self.manifolds.iter().find(|m| m.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.directions
            .iter()
            .map(|d| d.name.as_str())
            .chain(self.manifolds.iter().map(|m| m.name.as_str()))
            .collect()
    }

    /// Directions whose attribute (or name) equals `attribute`.
    pub fn directions_for(&self, attribute: &str) -> Vec<&EditDirection<T>> {
        self.directions
            .iter()
            .filter(|d| d.direction.attribute == attribute || d.name == attribute)
            .map(|d| &d.direction)
            .collect()
    }

    pub fn insert_direction(
        &mut self,
        name: &str,
        direction: EditDirection<T>,
        provenance: Provenance,
        overwrite: bool,
    ) -> Result<()> {
        direction.validate()?;
        if let Some(slot) = self.directions.iter_mut().find(|d| d.name == name) {
            if !overwrite {
                return Err(Error::DuplicateName(name.to_owned()));
            }
            slot.direction = direction;
            slot.provenance = provenance;
            return Ok(());
        }
        if self.name_taken(name) {
            return Err(Error::DuplicateName(name.to_owned()));
        }
        self.directions.push(LibraryDirection {
            name: name.to_owned(),
            provenance,
            direction,
        });
        Ok(())
    }

    pub fn insert_manifold(
        &mut self,
        name: &str,
        manifold: StyleManifold<T>,
        provenance: Provenance,
        overwrite: bool,
    ) -> Result<()> {
        manifold.validate()?;
        if let Some(slot) = self.manifolds.iter_mut().find(|m| m.name == name) {
            if !overwrite {
                return Err(Error::DuplicateName(name.to_owned()));
            }
            slot.manifold = manifold;
            slot.provenance = provenance;
            return Ok(());
        }
        if self.name_taken(name) {
            return Err(Error::DuplicateName(name.to_owned()));
        }
        self.manifolds.push(LibraryManifold {
            name: name.to_owned(),
            provenance,
            manifold,
        });
        Ok(())
    }

    /// Version, unique names and per-entry invariants.
    pub fn validate(&self) -> Result<()> {
        if self.version != LIBRARY_VERSION {
            return Err(Error::SchemaError(format!(
                "unsupported library version {}",
                self.version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.names() {
            if !seen.insert(name) {
                return Err(Error::InvariantViolation {
                    name: name.to_owned(),
                    reason: "duplicate name".into(),
                });
            }
        }
        let tag = |name: &str, e: Error| match e {
            Error::InvariantViolation { reason, .. } => Error::InvariantViolation {
                name: name.to_owned(),
                reason,
            },
            other => Error::InvariantViolation {
                name: name.to_owned(),
                reason: other.to_string(),
            },
        };
        for d in &self.directions {
            d.direction.validate().map_err(|e| tag(&d.name, e))?;
        }
        for m in &self.manifolds {
            m.manifold.validate().map_err(|e| tag(&m.name, e))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lib: Self = serde_json::from_str(text).map_err(|e| Error::SchemaError(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }
}

pub fn save_library<T: Scalar>(path: impl AsRef<Path>, library: &DirectionLibrary<T>) -> Result<()> {
    library.validate()?;
    let mut text = library.to_json();
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_library<T: Scalar>(path: impl AsRef<Path>) -> Result<DirectionLibrary<T>> {
    DirectionLibrary::from_json(&std::fs::read_to_string(path)?)
}
