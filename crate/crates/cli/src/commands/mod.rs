pub mod deconvolve;
pub mod evaluate;
pub mod simulate;
pub mod sweep;

use std::path::Path;

use anyhow::{Context, Result};

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating directory {}", path.display()))
}

/// A problem if `path` exists and is not a directory.
pub fn output_dir_problem(path: &Path) -> Option<String> {
    (path.exists() && !path.is_dir()).then(|| format!("output path {} exists and is not a directory", path.display()))
}

pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}
