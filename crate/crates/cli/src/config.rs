//! Flag/config-file merging. Precedence: command-line flags, then the JSON
//! config file, then built-in defaults; the effective values are echoed
//! into the output manifest.

use medlong::dataset::{ColumnSelector, CsvSchema};
use medlong::{Error, Result};
use serde::Deserialize;
use std::path::Path;

/// Optional JSON config file contents; every field may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub structure: Option<String>,
    pub permutations: Option<usize>,
    pub seed: Option<u64>,
    pub fdr_level: Option<f64>,
    pub basis_knots: Option<Vec<usize>>,
    pub smoothed_pvalues: Option<bool>,
    pub reestimate_weights: Option<bool>,
    pub contrast: Option<(f64, f64)>,
    pub grid_points: Option<usize>,
    pub schema: Option<CsvSchema>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::InvalidConfig(format!("bad config file: {e}")))
            }
        }
    }
}

/// Parse a column selector: either "prefix:m" or a comma-separated name
/// list.
pub fn parse_selector(raw: &str) -> ColumnSelector {
    match raw.strip_prefix("prefix:") {
        Some(prefix) => ColumnSelector::Prefix(prefix.to_string()),
        None => ColumnSelector::Names(raw.split(',').map(|s| s.trim().to_string()).collect()),
    }
}

/// Parse a comma-separated list of interior-knot candidates.
pub fn parse_knots(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad knot count '{s}'")))
        })
        .collect()
}

/// Parse "x,x_star" into a contrast pair.
pub fn parse_contrast(raw: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "contrast '{raw}' must be 'x,x_star'"
        )));
    }
    let x = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad contrast value '{}'", parts[0])))?;
    let x_star = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad contrast value '{}'", parts[1])))?;
    Ok((x, x_star))
}
