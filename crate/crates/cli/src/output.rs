//! Output-file plumbing: provenance headers, CSV and JSON writers.
//! Every file carries the config hash and seed; nothing carries wall-clock
//! state, so identical (config, seed) runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use stobeam_core::CoreError;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Resolve the output directory: flag > config > `STOBEAM_OUT` env >
/// `./stobeam-out`.
pub fn resolve_out_dir(flag: Option<&Path>, config_dir: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = config_dir {
        return PathBuf::from(p);
    }
    if let Ok(p) = std::env::var("STOBEAM_OUT") {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    PathBuf::from("stobeam-out")
}

pub fn provenance_header(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}\n")
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut f = fs::File::create(&path)?;
    f.write_all(content.as_bytes())?;
    Ok(path)
}

/// Join floats with commas using the shortest round-trip representation.
pub fn csv_row(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("{v}"));
    }
    out.push('\n');
    out
}
