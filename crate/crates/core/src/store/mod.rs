//! On-disk formats: LFD1 latent containers, JSON direction libraries and NPY import.

mod lfd;
mod library;
mod npy;

pub use lfd::{
    dataset_hash, decode_container, decode_dataset, decode_latents, encode_dataset, encode_latents, load_container,
    load_dataset, load_latents, replace_payload, save_dataset, save_latents, Container, LfdHeader, LFD_MAGIC,
    LFD_VERSION,
};
pub use library::{
    load_library, save_library, unix_now, DirectionLibrary, LibraryDirection, LibraryManifold, Provenance,
    LIBRARY_VERSION,
};
pub use npy::{import_npy, parse_npy, NpyLatents};

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    path.with_file_name(name)
}

/// Write `bytes` to `path` under an exclusive advisory lock, via a temp file
/// in the same directory renamed into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let lock: File = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(lock_path(path))?;
    lock.lock()?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    // temp files are created owner-only; keep the target's mode or use the usual default
    match std::fs::metadata(path) {
        Ok(meta) => tmp.as_file().set_permissions(meta.permissions())?,
        Err(_) => set_default_mode(tmp.as_file())?,
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    lock.unlock()?;
    Ok(())
}

#[cfg(unix)]
fn set_default_mode(file: &File) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    file.set_permissions(std::fs::Permissions::from_mode(0o644))
}

#[cfg(not(unix))]
fn set_default_mode(_: &File) -> std::io::Result<()> {
    Ok(())
}
