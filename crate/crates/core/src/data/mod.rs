//! Dataset parsing, normalization and splitting.

mod idx;
mod images;
mod series;
mod voting;

pub use idx::{parse_idx, read_idx_file, write_idx, IdxTensor};
pub use images::{load_mnist, normalize_images, ImageDataset, ImageStats};
pub use series::{normalize_minmax, one_step_split, parse_series, read_series_file, MinMax, SeriesDataset};
pub use voting::{load_voting, parse_voting, read_voting_file, VotingDataset, VOTING_RECORDS, VOTING_ISSUES};

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable that, when set, replaces the base directory used to
/// resolve relative dataset paths.
pub const DATA_DIR_ENV: &str = "EKI_DATA_DIR";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported IDX element type {0:#04x}")]
    UnsupportedType(u8),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{found} trailing bytes after payload")]
    TrailingBytes { found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum { path: PathBuf, expected: String, found: String },
    #[error("{0}")]
    Invalid(String),
}

/// Reads a file, transparently decompressing gzip content.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, DataError> {
    String::from_utf8(read_bytes(path)?).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))
}

/// Lower-case hex SHA-256 of the file as stored on disk.
pub fn sha256_file(path: &Path) -> Result<String, DataError> {
    let raw = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&raw).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn verify_sha256(path: &Path, expected: &str) -> Result<(), DataError> {
    let found = sha256_file(path)?;
    if found.eq_ignore_ascii_case(expected.trim()) {
        Ok(())
    } else {
        Err(DataError::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found,
        })
    }
}

/// Resolves a dataset path. Absolute paths are kept; relative paths are joined
/// onto `$EKI_DATA_DIR` when set, otherwise onto `base`.
pub fn resolve_data_path(path: &Path, base: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => base.join(path),
    }
}

/// Supervised pairs with flat inputs and targets, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub input_dim: usize,
    pub target_dim: usize,
    len: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, input_dim: usize, target_dim: usize) -> Result<Self, DataError> {
        if target_dim == 0 {
            return Err(DataError::Invalid("target dimension must be positive".into()));
        }
        let len = targets.len() / target_dim;
        if targets.len() % target_dim != 0 || inputs.len() != len * input_dim {
            return Err(DataError::Invalid(format!(
                "{} inputs of width {input_dim} do not pair with {} targets of width {target_dim}",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self {
            inputs,
            targets,
            input_dim,
            target_dim,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut targets = Vec::with_capacity(indices.len() * self.target_dim);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            targets.extend_from_slice(self.target(i));
        }
        Dataset {
            inputs,
            targets,
            input_dim: self.input_dim,
            target_dim: self.target_dim,
            len: indices.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_accessors() {
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0], 2, 1).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input(1), &[3.0, 4.0]);
        let s = d.subset(&[1, 1, 0]);
        assert_eq!(s.targets, vec![1.0, 1.0, 0.0]);
        assert!(Dataset::new(vec![1.0], vec![0.0, 1.0], 2, 1).is_err());
    }

    #[test]
    fn checksums() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        let sum = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
        assert_eq!(sha256_file(&p).unwrap(), sum);
        verify_sha256(&p, &sum.to_uppercase()).unwrap();
        assert!(matches!(verify_sha256(&p, "00"), Err(DataError::Checksum { .. })));
    }

    #[test]
    fn absolute_paths_are_kept() {
        let p = Path::new("/tmp/x.csv");
        assert_eq!(resolve_data_path(p, Path::new("/base")), p);
    }
}
