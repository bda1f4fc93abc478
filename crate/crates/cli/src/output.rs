use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Writes CSV files that start with provenance comment lines.
pub struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Output {
    pub fn new(dir: &Path, config_text: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let hash = Sha256::digest(config_text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { dir: dir.to_path_buf(), hash, seed })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, header: &[String]) -> Result<csv::Writer<File>> {
        let path = self.path(name);
        let mut f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        writeln!(f, "# config-hash: {}", self.hash)?;
        writeln!(f, "# seed: {}", self.seed)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        Ok(w)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn columns(fixed: &[&str], paths: usize, prefix: &str, tail: &[&str]) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((1..=paths).map(|i| format!("{prefix}{i}")))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
