//! JSONL persistence: one JSON object per line, validated on load.
//!
//! Loading is all-or-nothing. The first malformed or invalid line aborts the
//! load with an error naming its 1-based line number; blank lines are skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result, ValidationError};
use crate::model::{ImageAnnotation, PredictionSet};

/// A record type that lives in a JSONL dataset keyed by image id.
pub trait DatasetRecord: Serialize + DeserializeOwned {
    fn image_id(&self) -> &str;
    fn validate(&self) -> Result<(), ValidationError>;
}

impl DatasetRecord for ImageAnnotation {
    fn image_id(&self) -> &str {
        &self.image_id
    }

    fn validate(&self) -> Result<(), ValidationError> {
        ImageAnnotation::validate(self)
    }
}

impl DatasetRecord for PredictionSet {
    fn image_id(&self) -> &str {
        &self.image_id
    }

    fn validate(&self) -> Result<(), ValidationError> {
        PredictionSet::validate(self)
    }
}

/// Parse and validate dataset records from any buffered reader.
pub fn read_records<T: DatasetRecord, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Json {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Json {
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate().map_err(|source| Error::Invalid {
            line: line_no,
            image_id: record.image_id().to_string(),
            source,
        })?;
        if !seen.insert(record.image_id().to_string()) {
            return Err(Error::DuplicateImageId {
                line: line_no,
                image_id: record.image_id().to_string(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn parse_records<T: DatasetRecord>(text: &str) -> Result<Vec<T>> {
    read_records(text.as_bytes())
}

pub fn write_records<T: Serialize, W: Write>(records: &[T], mut writer: W) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn load_records<T: DatasetRecord>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file))
}

pub fn save_records<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(records, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<ImageAnnotation>> {
    load_records(path)
}

pub fn save_annotations(records: &[ImageAnnotation], path: impl AsRef<Path>) -> Result<()> {
    save_records(records, path)
}

pub fn parse_annotations(text: &str) -> Result<Vec<ImageAnnotation>> {
    parse_records(text)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionSet>> {
    load_records(path)
}

pub fn save_predictions(records: &[PredictionSet], path: impl AsRef<Path>) -> Result<()> {
    save_records(records, path)
}
