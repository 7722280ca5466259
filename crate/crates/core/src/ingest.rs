//! Component download and on-disk caching for the 1999–2014 survey cycles.
//!
//! All network traffic goes through the [`Transport`] trait so every caller
//! (and every test) can run fully offline against a stub or a local mirror.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cycle starting {0} is not part of the supported 1999-2014 range")]
    UnsupportedCycle(u16),
    #[error("transport failure for {url}: {message}")]
    Transport { url: String, message: String },
    #[error("server returned an empty body for {0}")]
    EmptyBody(String),
    #[error("cache io error at {path}: {message}")]
    CacheIo { path: PathBuf, message: String },
}

/// One of the eight two-year survey cycles, identified by its first year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct CycleId(u16);

impl CycleId {
    pub const ALL: [CycleId; 8] = [
        CycleId(1999),
        CycleId(2001),
        CycleId(2003),
        CycleId(2005),
        CycleId(2007),
        CycleId(2009),
        CycleId(2011),
        CycleId(2013),
    ];

    pub fn new(start_year: u16) -> Result<CycleId, IngestError> {
        if Self::ALL.contains(&CycleId(start_year)) {
            Ok(CycleId(start_year))
        } else {
            Err(IngestError::UnsupportedCycle(start_year))
        }
    }

    pub fn start_year(&self) -> u16 {
        self.0
    }

    /// "1999-2000" etc.; this is also the path segment in component URLs.
    pub fn label(&self) -> String {
        format!("{}-{}", self.0, self.0 + 1)
    }

    /// File-name suffix: first cycle has none, later cycles count up from B.
    pub fn suffix(&self) -> &'static str {
        match self.0 {
            1999 => "",
            2001 => "_B",
            2003 => "_C",
            2005 => "_D",
            2007 => "_E",
            2009 => "_F",
            2011 => "_G",
            2013 => "_H",
            _ => unreachable!("constructor rejects other years"),
        }
    }
}

impl TryFrom<u16> for CycleId {
    type Error = String;
    fn try_from(y: u16) -> Result<Self, String> {
        CycleId::new(y).map_err(|e| e.to_string())
    }
}

impl From<CycleId> for u16 {
    fn from(c: CycleId) -> u16 {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Demographics,
    Examination,
    Laboratory,
    Questionnaire,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Demographics,
        Category::Examination,
        Category::Laboratory,
        Category::Questionnaire,
    ];
}

/// A data file request: base stem (e.g. "DEMO", "BMX") plus the cycle it is
/// wanted for. The cycle suffix is appended when forming the URL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentRef {
    pub base_name: String,
    pub cycle: CycleId,
    pub category: Category,
}

pub fn build_component_url(component: &ComponentRef) -> String {
    format!(
        "https://wwwn.cdc.gov/Nchs/Nhanes/{}/{}{}.XPT",
        component.cycle.label(),
        component.base_name,
        component.cycle.suffix()
    )
}

/// What a fetch produced: payload bytes, or a definitive "this file does not
/// exist for that cycle" (an HTTP 404), which is data absence, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum FetchOutcome {
    Ok(Vec<u8>),
    NotFound,
}

pub trait Transport {
    fn fetch(&self, url: &str) -> Result<FetchOutcome, IngestError>;
}

/// Blocking HTTP transport used by the real CLI.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> HttpTransport {
        HttpTransport {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("client with static config"),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn fetch(&self, url: &str) -> Result<FetchOutcome, IngestError> {
        let resp = self.client.get(url).send().map_err(|e| IngestError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        if resp.status() == reqwest::StatusCode::NOT_FOUND {
            return Ok(FetchOutcome::NotFound);
        }
        if !resp.status().is_success() {
            return Err(IngestError::Transport {
                url: url.to_string(),
                message: format!("status {}", resp.status()),
            });
        }
        let bytes = resp.bytes().map_err(|e| IngestError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        Ok(FetchOutcome::Ok(bytes.to_vec()))
    }
}

/// Transport serving files from a local directory; the file name is the last
/// URL path segment. Missing files read as 404s. Lets `download` run against
/// a pre-fetched mirror with no network at all.
pub struct DirTransport {
    pub root: PathBuf,
}

impl Transport for DirTransport {
    fn fetch(&self, url: &str) -> Result<FetchOutcome, IngestError> {
        let name = url.rsplit('/').next().unwrap_or_default();
        let path = self.root.join(name);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(FetchOutcome::Ok(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(FetchOutcome::NotFound),
            Err(e) => Err(IngestError::Transport {
                url: url.to_string(),
                message: e.to_string(),
            }),
        }
    }
}

/// One line of the JSONL cache manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub url: String,
    pub sha256: String,
    pub bytes: usize,
    /// false when the server said the file does not exist
    pub present: bool,
}

fn cache_key(url: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn cache_io(path: &Path, e: impl std::fmt::Display) -> IngestError {
    IngestError::CacheIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

const RETRIES: usize = 3;

/// Fetch a URL through the cache.
///
/// Cache layout under `cache_dir`: `<sha256(url)>.bin` payload files,
/// `<sha256(url)>.miss` markers for known-absent files, and `manifest.jsonl`
/// appended once per new entry. Writes go to a temp file first and are
/// renamed into place so a crash never leaves a torn payload.
pub fn fetch_cached(
    transport: &dyn Transport,
    cache_dir: &Path,
    url: &str,
) -> Result<FetchOutcome, IngestError> {
    std::fs::create_dir_all(cache_dir).map_err(|e| cache_io(cache_dir, e))?;
    let key = cache_key(url);
    let payload_path = cache_dir.join(format!("{key}.bin"));
    let miss_path = cache_dir.join(format!("{key}.miss"));
    if payload_path.exists() {
        let bytes = std::fs::read(&payload_path).map_err(|e| cache_io(&payload_path, e))?;
        return Ok(FetchOutcome::Ok(bytes));
    }
    if miss_path.exists() {
        return Ok(FetchOutcome::NotFound);
    }

    let mut last_err = None;
    let mut outcome = None;
    for attempt in 0..RETRIES {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(100 * (1 << attempt)));
        }
        match transport.fetch(url) {
            Ok(o) => {
                outcome = Some(o);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let outcome = match outcome {
        Some(o) => o,
        None => return Err(last_err.expect("no outcome implies an error")),
    };

    let entry = match &outcome {
        FetchOutcome::Ok(bytes) => {
            if bytes.is_empty() {
                return Err(IngestError::EmptyBody(url.to_string()));
            }
            let tmp = cache_dir.join(format!("{key}.tmp"));
            std::fs::write(&tmp, bytes).map_err(|e| cache_io(&tmp, e))?;
            std::fs::rename(&tmp, &payload_path).map_err(|e| cache_io(&payload_path, e))?;
            let mut hasher = Sha256::new();
            hasher.update(bytes);
            ManifestEntry {
                url: url.to_string(),
                sha256: format!("{:x}", hasher.finalize()),
                bytes: bytes.len(),
                present: true,
            }
        }
        FetchOutcome::NotFound => {
            std::fs::write(&miss_path, b"").map_err(|e| cache_io(&miss_path, e))?;
            ManifestEntry {
                url: url.to_string(),
                sha256: String::new(),
                bytes: 0,
                present: false,
            }
        }
    };

    let manifest_path = cache_dir.join("manifest.jsonl");
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&manifest_path)
        .map_err(|e| cache_io(&manifest_path, e))?;
    let line = serde_json::to_string(&entry).expect("entry serializes");
    writeln!(file, "{line}").map_err(|e| cache_io(&manifest_path, e))?;
    Ok(outcome)
}

pub fn read_manifest(cache_dir: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let path = cache_dir.join("manifest.jsonl");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| cache_io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| cache_io(&path, e)))
        .collect()
}

/// Result of fetching one component for one cycle.
#[derive(Debug, Clone)]
pub struct ComponentFetch {
    pub component: ComponentRef,
    pub url: String,
    /// None when the server reported the file absent for that cycle
    pub data: Option<Vec<u8>>,
}

/// Fetch every (stem, cycle) combination; 404s are recorded, not fatal.
pub fn fetch_components(
    transport: &dyn Transport,
    cache_dir: &Path,
    components: &[ComponentRef],
) -> Result<Vec<ComponentFetch>, IngestError> {
    let mut out = Vec::with_capacity(components.len());
    for component in components {
        let url = build_component_url(component);
        let data = match fetch_cached(transport, cache_dir, &url)? {
            FetchOutcome::Ok(bytes) => Some(bytes),
            FetchOutcome::NotFound => None,
        };
        out.push(ComponentFetch {
            component: component.clone(),
            url,
            data,
        });
    }
    Ok(out)
}
