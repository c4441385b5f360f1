use std::path::{Path, PathBuf};

use crate::error::Result;

/// Floats with 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Config hash and seed, written as the first line of every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

/// A file produced by a run, kept in memory until written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    pub fn csv(name: impl Into<String>, prov: &Provenance, header: &str, rows: &[String]) -> Self {
        let mut contents = prov.comment();
        contents.push('\n');
        contents.push_str(header);
        contents.push('\n');
        for r in rows {
            contents.push_str(r);
            contents.push('\n');
        }
        Self {
            name: name.into(),
            contents,
        }
    }

    /// Data rows (comment and header removed).
    pub fn rows(&self) -> impl Iterator<Item = &str> {
        self.contents.lines().filter(|l| !l.starts_with('#')).skip(1)
    }
}

/// Writes every file under `dir`, creating it if needed, in order.
pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(files.len());
    for f in files {
        let p = dir.join(&f.name);
        std::fs::write(&p, &f.contents)?;
        paths.push(p);
    }
    Ok(paths)
}
