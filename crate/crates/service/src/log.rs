//! Append-only decision log, one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use tracing::warn;

use crate::error::Result;
use crate::queue::{Catalog, Decision};

pub struct DecisionLog {
    file: File,
    path: PathBuf,
}

impl DecisionLog {
    /// Opens `path` for appending, creating it if needed. A final line left
    /// without its newline (an interrupted write) is terminated first so the
    /// next record starts on a line of its own.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let len = file.metadata()?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
                file.sync_data()?;
            }
        }
        Ok(DecisionLog {
            file,
            path: path.to_owned(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one decision and syncs it to disk before returning.
    pub fn append(&mut self, decision: &Decision) -> Result<()> {
        let mut line = serde_json::to_vec(decision)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Replay {
    pub decisions: Vec<Decision>,
    /// Lines that did not parse or did not fit the loaded run.
    pub skipped: usize,
}

/// Decisions recorded in `bytes` that are valid for `catalog`, in log order.
/// A trailing line without newline is read like any other.
pub fn replay_bytes(bytes: &[u8], catalog: &Catalog) -> Replay {
    let mut out = Replay::default();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let decision = match serde_json::from_slice::<Decision>(line) {
            Ok(d) => d,
            Err(e) => {
                warn!(line = i + 1, error = %e, "skipping unreadable log line");
                out.skipped += 1;
                continue;
            }
        };
        if let Err(e) = catalog.validate(&decision) {
            warn!(line = i + 1, error = %e, "skipping log line that does not match the run");
            out.skipped += 1;
            continue;
        }
        out.decisions.push(decision);
    }
    out
}

/// Replays the log at `path`; a missing file is an empty log.
pub fn replay_file(path: &Path, catalog: &Catalog) -> Result<Replay> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(replay_bytes(&bytes, catalog)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Replay::default()),
        Err(e) => Err(e.into()),
    }
}
