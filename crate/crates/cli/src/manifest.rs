//! Run manifest: effective configuration, seed, version, and wall-clock.
//! The manifest is the only output file containing timing information.

use medlong::{Error, Result};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Serialize)]
pub struct Manifest<C: Serialize, R: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: C,
    pub results: R,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
    pub threads: usize,
}

pub struct Timer {
    start: Instant,
    started_unix: u64,
}

impl Timer {
    pub fn start() -> Self {
        Timer {
            start: Instant::now(),
            started_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write_manifest<C: Serialize, R: Serialize>(
        &self,
        dir: &Path,
        command: &'static str,
        config: C,
        results: R,
    ) -> Result<()> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            results,
            started_unix: self.started_unix,
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        };
        let file = std::fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(file, &manifest)
            .map_err(|e| Error::InvalidConfig(format!("manifest serialization failed: {e}")))?;
        Ok(())
    }
}
