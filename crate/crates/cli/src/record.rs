//! Run records: a small key/value TSV written next to each artifact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("ACNN_VERSION");

pub struct RunRecord {
    pub command_line: String,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub threads: usize,
    started_unix: u64,
    started: Instant,
    last: Instant,
    timings: Vec<(String, f64)>,
}

pub fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    let mut s = String::from("sha256:");
    for b in hash {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl RunRecord {
    pub fn start(threads: usize) -> Self {
        let now = Instant::now();
        RunRecord {
            command_line: std::env::args().collect::<Vec<_>>().join(" "),
            seed: None,
            config_digest: None,
            threads,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            started: now,
            last: now,
            timings: Vec::new(),
        }
    }

    /// Close a named phase; its duration runs from the previous mark.
    pub fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        self.timings.push((phase.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn render(&self, status: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command\t{}", self.command_line);
        let _ = writeln!(s, "version\t{VERSION}");
        let _ = writeln!(s, "seed\t{}", self.seed.map_or("-".into(), |v| v.to_string()));
        let _ = writeln!(s, "config_digest\t{}", self.config_digest.as_deref().unwrap_or("-"));
        let _ = writeln!(s, "threads\t{}", self.threads);
        let _ = writeln!(s, "started_unix\t{}", self.started_unix);
        for (phase, secs) in &self.timings {
            let _ = writeln!(s, "seconds.{phase}\t{secs:.3}");
        }
        let _ = writeln!(s, "seconds.total\t{:.3}", self.started.elapsed().as_secs_f64());
        let _ = writeln!(s, "status\t{}", status.replace(['\n', '\t'], " "));
        s
    }

    /// Write via a temporary file in the same directory and a rename, so
    /// readers never see a partial record.
    pub fn write(&self, path: &Path, status: &str) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(self.render(status).as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).with_context(|| format!("writing run record {}", path.display()))?;
        Ok(())
    }
}
