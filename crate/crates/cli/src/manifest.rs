use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fairstream::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Wraps a reader and hashes every byte that passes through it.
pub struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> HashingReader<R> {
    pub fn new(inner: R) -> Self {
        HashingReader {
            inner,
            hasher: Sha256::new(),
            bytes: 0,
        }
    }

    pub fn finish(self) -> (String, u64) {
        (hex(&self.hasher.finalize()), self.bytes)
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Reads a small file whole and records its digest.
pub fn read_small(role: &str, path: &Path) -> Result<(String, InputDigest)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = HashingReader::new(file);
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    let (sha256, bytes) = reader.finish();
    Ok((
        text,
        InputDigest {
            role: role.into(),
            path: path.to_path_buf(),
            sha256,
            bytes,
        },
    ))
}

/// Record of one run, written next to its primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: &'static str,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Value,
    pub version: String,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    /// `VmHWM` of this process; absent where `/proc` is unavailable.
    pub peak_rss_kib: Option<u64>,
}

pub struct RunClock {
    started: Instant,
    started_unix: f64,
}

impl RunClock {
    pub fn start() -> Self {
        RunClock {
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        }
    }
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub struct ManifestInput {
    pub subcommand: &'static str,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Value,
}

pub fn write_manifest(out: &Path, clock: &RunClock, m: ManifestInput) -> Result<PathBuf> {
    let manifest = RunManifest {
        command: std::env::args().collect(),
        subcommand: m.subcommand,
        config: m.config,
        inputs: m.inputs,
        outputs: m.outputs,
        seeds: m.seeds,
        version: format!("fairstream {}", env!("CARGO_PKG_VERSION")),
        started_unix: clock.started_unix,
        wall_clock_seconds: clock.started.elapsed().as_secs_f64(),
        peak_rss_kib: peak_rss_kib(),
    };
    let path = manifest_path(out);
    write_text(&path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Writes `text` plus a trailing newline.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
