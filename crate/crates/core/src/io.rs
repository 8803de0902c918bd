//! JSONL persistence for datasets and JSON helpers for parameter files.
//!
//! One annotation per line, fields in the fixed order of
//! [`Annotation::FIELDS`]. The serialized form is canonical: `save(load(f))`
//! reproduces `f` byte for byte when `f` was itself written by [`save_dataset`].

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::{Annotation, Dataset, DatasetMetadata, Split};

/// Options for [`load_dataset`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject records carrying unknown fields (otherwise warn and ignore).
    pub strict: bool,
    /// Drop Noninclusive frames after validation.
    pub filter_noninclusive: bool,
}

/// Parses one JSONL record. `line` is 1-based and only used for messages.
pub fn parse_record(text: &str, line: usize, strict: bool) -> Result<Annotation> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|source| Error::Json { line, source })?;
    let obj = value.as_object().ok_or_else(|| {
        Error::InvalidInput(format!("line {line}: record is not a JSON object"))
    })?;
    let unknown: Vec<&str> = obj
        .keys()
        .map(String::as_str)
        .filter(|k| !Annotation::FIELDS.contains(k))
        .collect();
    if !unknown.is_empty() {
        if strict {
            return Err(Error::InvalidInput(format!(
                "line {line}: unknown fields {unknown:?}"
            )));
        }
        warn!("line {line}: ignoring unknown fields {unknown:?}");
    }
    let ann: Annotation =
        serde_json::from_value(value).map_err(|source| Error::Json { line, source })?;
    ann.validate()?;
    Ok(ann)
}

/// Reads a JSONL dataset. Metadata counts are recomputed; provenance is
/// read from the sidecar written by [`save_dataset_dir`] when present.
pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut annotations = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        annotations.push(parse_record(&line, idx + 1, opts.strict)?);
    }
    finish(Dataset::new(annotations), opts)
}

fn finish(ds: Dataset, opts: &LoadOptions) -> Result<Dataset> {
    ds.validate()?;
    Ok(if opts.filter_noninclusive {
        ds.filter_noninclusive()
    } else {
        ds
    })
}

fn write_records<'a>(
    path: &Path,
    records: impl Iterator<Item = &'a Annotation>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for a in records {
        serde_json::to_writer(&mut w, a).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every annotation to one JSONL file.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_records(path.as_ref(), ds.annotations.iter())
}

pub fn split_file(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

pub fn metadata_file(dir: &Path) -> PathBuf {
    dir.join("metadata.json")
}

/// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` and `metadata.json`.
pub fn save_dataset_dir(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let path = split_file(dir, split);
        write_records(&path, ds.annotations.iter().filter(|a| a.split == split))?;
    }
    write_json(metadata_file(dir), &ds.metadata)
}

/// Reads whichever of the three split files exist in `dir`.
pub fn load_dataset_dir(dir: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut annotations = Vec::new();
    let mut found = false;
    for split in Split::ALL {
        let path = split_file(dir, split);
        if !path.exists() {
            continue;
        }
        found = true;
        // Filtering happens once, on the merged dataset.
        let part = load_dataset(&path, &LoadOptions { filter_noninclusive: false, ..*opts })?;
        annotations.extend(part.annotations);
    }
    if !found {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no split files found"),
        ));
    }
    let mut ds = Dataset::new(annotations);
    let meta_path = metadata_file(dir);
    if meta_path.exists() {
        let meta: DatasetMetadata = read_json(&meta_path)?;
        ds.metadata.config_hash = meta.config_hash;
        ds.metadata.seed = meta.seed;
    }
    finish(ds, opts)
}

/// Loads either a dataset directory or a single JSONL file.
pub fn load_dataset_any(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    if path.is_dir() {
        load_dataset_dir(path, opts)
    } else {
        load_dataset(path, opts)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::JsonDocument {
        path: path.to_path_buf(),
        source,
    })
}
