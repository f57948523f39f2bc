use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Provenance record of one output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub spec_sha256: String,
    pub config_sha256: String,
    pub tool_version: String,
    pub started: u64,
    pub finished: u64,
    /// `(file name, sha256)`, sorted by name.
    pub files: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, spec_text: &str, config_text: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            spec_sha256: sha256_hex(spec_text.as_bytes()),
            config_sha256: sha256_hex(config_text.as_bytes()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: unix_now(),
            finished: 0,
            files: Vec::new(),
        }
    }

    /// Hash every regular file in `dir` except the manifest itself.
    pub fn inventory(&mut self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST || !entry.file_type()?.is_file() {
                continue;
            }
            files.push((name, sha256_hex(&std::fs::read(entry.path())?)));
        }
        files.sort();
        self.files = files;
        self.finished = unix_now();
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[run]\n");
        writeln!(s, "command = {}", self.command).unwrap();
        writeln!(s, "tool_version = {}", self.tool_version).unwrap();
        writeln!(s, "spec_sha256 = {}", self.spec_sha256).unwrap();
        writeln!(s, "config_sha256 = {}", self.config_sha256).unwrap();
        writeln!(s, "started = {}", self.started).unwrap();
        writeln!(s, "finished = {}", self.finished).unwrap();
        s.push_str("\n[files]\n");
        for (name, hash) in &self.files {
            writeln!(s, "{hash}  {name}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest {
            command: String::new(),
            spec_sha256: String::new(),
            config_sha256: String::new(),
            tool_version: String::new(),
            started: 0,
            finished: 0,
            files: Vec::new(),
        };
        let mut in_files = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line.starts_with('[') {
                in_files = line == "[files]";
                continue;
            }
            if in_files {
                let (hash, name) = line
                    .split_once("  ")
                    .context("malformed manifest file line")?;
                m.files.push((name.to_string(), hash.to_string()));
                continue;
            }
            let (k, v) = line.split_once(" = ").context("malformed manifest line")?;
            match k {
                "command" => m.command = v.to_string(),
                "tool_version" => m.tool_version = v.to_string(),
                "spec_sha256" => m.spec_sha256 = v.to_string(),
                "config_sha256" => m.config_sha256 = v.to_string(),
                "started" => m.started = v.parse()?,
                "finished" => m.finished = v.parse()?,
                _ => {}
            }
        }
        Ok(m)
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.inventory(dir)?;
        std::fs::write(dir.join(MANIFEST), self.to_text())?;
        Ok(())
    }

    /// Listed files whose current content no longer matches.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(name, hash)| {
                std::fs::read(dir.join(name)).map_or(true, |b| sha256_hex(&b) != *hash)
            })
            .map(|(name, _)| name.clone())
            .collect()
    }
}
