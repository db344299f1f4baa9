//! Append-only manifest: one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::record::PageRecord;

pub const MANIFEST_FILE: &str = "manifest.log";

pub(crate) struct ManifestWriter {
    path: PathBuf,
    file: File,
    len: u64,
    sync: bool,
}

impl ManifestWriter {
    /// Opens for appending, cutting off a torn trailing line left by a crash.
    pub(crate) fn open(path: &Path, valid_len: u64, sync: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let on_disk = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if on_disk != valid_len {
            file.set_len(valid_len).map_err(|e| Error::io(path, e))?;
        }
        Ok(ManifestWriter {
            path: path.to_path_buf(),
            file,
            len: valid_len,
            sync,
        })
    }

    /// Appends one record. On failure the file is rolled back to its previous length.
    pub(crate) fn append(&mut self, record: &PageRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        use std::io::{Seek, SeekFrom};
        let res = self
            .file
            .seek(SeekFrom::Start(self.len))
            .and_then(|_| self.file.write_all(&line))
            .and_then(|_| if self.sync { self.file.sync_data() } else { self.file.flush() });
        match res {
            Ok(()) => {
                self.len += line.len() as u64;
                Ok(())
            }
            Err(e) => {
                let _ = self.file.set_len(self.len);
                Err(Error::io(&self.path, e))
            }
        }
    }
}

/// Records in a manifest plus the byte length of its intact prefix.
pub(crate) struct Replayed {
    pub records: Vec<PageRecord>,
    pub valid_len: u64,
}

/// Reads a manifest. A final line without newline, or one that fails to parse,
/// is a torn write and is dropped; a bad line elsewhere is corruption.
pub(crate) fn replay(path: &Path) -> Result<Replayed> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(Replayed {
                records: Vec::new(),
                valid_len: 0,
            })
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut valid_len = 0u64;
    let mut buf = Vec::new();
    let mut line_no = 0;
    let mut pending_error: Option<Error> = None;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if let Some(err) = pending_error.take() {
            // A bad line followed by more data is not a torn tail.
            return Err(err);
        }
        let complete = buf.last() == Some(&b'\n');
        match serde_json::from_slice::<PageRecord>(&buf) {
            Ok(record) if complete => {
                records.push(record);
                valid_len += n as u64;
            }
            Ok(_) => break,
            Err(e) => {
                if !complete {
                    break;
                }
                pending_error = Some(Error::CorruptManifest {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(Replayed { records, valid_len })
}

/// Records of a manifest file, for offline analysis.
pub fn read_manifest(path: &Path) -> Result<Vec<PageRecord>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        ));
    }
    Ok(replay(path)?.records)
}

/// Canonical text of a record set: sorted, with ingest order and storage paths
/// removed, so two runs of the same scenario compare equal regardless of
/// interleaving.
pub fn canonical_lines(records: &[PageRecord]) -> Vec<String> {
    let mut lines: Vec<String> = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.ingest_sequence = 0;
            r.storage_path = String::new();
            serde_json::to_string(&r).expect("records serialize")
        })
        .collect();
    lines.sort();
    lines
}
