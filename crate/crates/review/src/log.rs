//! Append-only verdict log.
//!
//! One JSON [`Verdict`] per line. Every append is flushed and fsynced before
//! it returns, so an acknowledged verdict survives a crash. A torn final
//! line (no trailing newline, unparseable) left by a crash mid-write is
//! ignored on open and overwritten by the next append; a bad line anywhere
//! else is corruption.

use std::fs::{File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anomkit_core::Verdict;
use tracing::warn;

use crate::ReviewError;

pub struct VerdictLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

struct Inner {
    file: Option<File>,
    entries: Vec<Verdict>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse log text. Returns the verdicts and the byte length of the valid prefix.
pub fn parse_log(text: &str) -> Result<(Vec<Verdict>, usize), ReviewError> {
    let mut entries = Vec::new();
    let mut offset = 0;
    let mut valid_len = 0;
    let mut lines = text.split_inclusive('\n').enumerate().peekable();
    while let Some((i, raw)) = lines.next() {
        offset += raw.len();
        let line = raw.trim();
        if line.is_empty() {
            valid_len = offset;
            continue;
        }
        match serde_json::from_str::<Verdict>(line) {
            Ok(v) => {
                entries.push(v);
                valid_len = offset;
            }
            Err(e) if lines.peek().is_none() && !raw.ends_with('\n') => {
                warn!(line = i + 1, "ignoring torn final log line: {e}");
            }
            Err(e) => {
                return Err(ReviewError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((entries, valid_len))
}

impl VerdictLog {
    /// A log kept only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                file: None,
                entries: Vec::new(),
            }),
        }
    }

    /// Open or create a log file and load its verdicts.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ReviewError> {
        let path = path.as_ref();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(path)(e)),
        };
        let (entries, valid_len) = parse_log(&text)?;
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(io_err(path))?;
        if valid_len < text.len() {
            file.set_len(valid_len as u64).map_err(io_err(path))?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                file: Some(file),
                entries,
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Durably append one verdict. Writers are serialized.
    pub fn append(&self, verdict: &Verdict) -> Result<(), ReviewError> {
        let mut inner = self.inner.lock().expect("log lock");
        if let (Some(file), Some(path)) = (inner.file.as_mut(), self.path.as_deref()) {
            let mut line = serde_json::to_string(verdict).expect("verdict serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io_err(path))?;
            file.sync_data().map_err(io_err(path))?;
        }
        inner.entries.push(verdict.clone());
        Ok(())
    }

    pub fn entries(&self) -> Vec<Verdict> {
        self.inner.lock().expect("log lock").entries.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("log lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Read a log file without opening it for writing.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<Verdict>, ReviewError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_log(&text)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anomkit_core::Decision;

    fn v(idx: usize, d: Decision) -> Verdict {
        Verdict {
            image_id: "img".into(),
            anomaly_index: idx,
            decision: d,
            annotator_id: "ann".into(),
            timestamp: chrono::DateTime::from_timestamp(1_700_000_000 + idx as i64, 0).unwrap(),
        }
    }

    #[test]
    fn appends_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        let log = VerdictLog::open(&path).unwrap();
        log.append(&v(0, Decision::Accept)).unwrap();
        log.append(&v(1, Decision::Reject)).unwrap();
        drop(log);
        let reopened = VerdictLog::open(&path).unwrap();
        assert_eq!(reopened.entries(), vec![v(0, Decision::Accept), v(1, Decision::Reject)]);
        reopened.append(&v(2, Decision::Unsure)).unwrap();
        assert_eq!(read_log(&path).unwrap().len(), 3);
    }

    #[test]
    fn torn_tail_is_dropped_and_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        let good = serde_json::to_string(&v(0, Decision::Accept)).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"image_id\": \"im")).unwrap();
        let log = VerdictLog::open(&path).unwrap();
        assert_eq!(log.len(), 1);
        log.append(&v(1, Decision::Accept)).unwrap();
        assert_eq!(read_log(&path).unwrap().len(), 2);
    }

    #[test]
    fn corruption_in_the_middle_is_an_error() {
        let good = serde_json::to_string(&v(0, Decision::Accept)).unwrap();
        let err = parse_log(&format!("{good}\nnot json\n{good}\n")).unwrap_err();
        assert!(matches!(err, ReviewError::Corrupt { line: 2, .. }));
    }
}
