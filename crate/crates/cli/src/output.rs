use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

/// Writes results to `--out` or stdout. Timestamps never enter the results;
/// they go to the `.meta.json` sidecar.
pub struct Sink {
    out: Option<PathBuf>,
    started_unix: u64,
    clock: Instant,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Self {
        Sink {
            out,
            started_unix: unix_now(),
            clock: Instant::now(),
        }
    }

    pub fn is_file(&self) -> bool {
        self.out.is_some()
    }

    pub fn text(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(p) => write_file(p, text.as_bytes()),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                stdout.flush()?;
                Ok(())
            }
        }
    }

    pub fn json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        self.text(&to_json(value)?)
    }

    /// Records argv, version and timings next to the output file.
    pub fn finish(&self, status: &str) -> Result<(), CliError> {
        let Some(out) = &self.out else {
            return Ok(());
        };
        let meta = serde_json::json!({
            "argv": std::env::args().collect::<Vec<_>>(),
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": self.started_unix,
            "finished_unix": unix_now(),
            "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
            "status": status,
        });
        write_file(&sidecar(out), to_json(&meta)?.as_bytes())
    }
}

pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Replaces `path` atomically through a temporary sibling.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
