//! Locating and loading participant data.
//!
//! `--data` may name an aligned CSV, a directory holding `aligned.csv`, a
//! single participant directory with `accel.csv`, `gps.csv` and `hr.csv`, or
//! a directory of such participant directories (participant id = directory
//! name).

use std::path::{Path, PathBuf};

use hrgap_core::ingest::{align_streams, load_raw_dir, read_aligned_file, Channel, ParticipantStream};
use hrgap_core::{Error, Result};
use rayon::prelude::*;

pub const ALIGNED_FILE: &str = "aligned.csv";

fn is_raw_dir(dir: &Path) -> bool {
    dir.join(Channel::Accel.file_name()).is_file()
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "participant".into())
}

fn load_raw(dir: &Path) -> Result<ParticipantStream> {
    let raw = load_raw_dir(dir)?;
    if !raw.rejected.is_empty() {
        eprintln!(
            "warning: {}: {} malformed row(s) skipped",
            dir.display(),
            raw.rejected.len()
        );
    }
    align_streams(&raw.accel, &raw.gps, &raw.hr, &dir_name(dir))
}

/// Loads every participant under `path`, in participant-directory order.
pub fn load_streams(path: &Path) -> Result<Vec<ParticipantStream>> {
    if path.is_file() {
        return read_aligned_file(path);
    }
    if !path.is_dir() {
        return Err(Error::Data(format!("{} does not exist", path.display())));
    }
    if path.join(ALIGNED_FILE).is_file() {
        return read_aligned_file(path.join(ALIGNED_FILE));
    }
    if is_raw_dir(path) {
        return Ok(vec![load_raw(path)?]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && is_raw_dir(p))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!(
            "no participant data under {} (expected {ALIGNED_FILE} or directories with accel.csv, gps.csv, hr.csv)",
            path.display()
        )));
    }
    dirs.par_iter().map(|d| load_raw(d)).collect()
}
