//! CSV tables with a provenance comment line.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub struct Table {
    pub name: &'static str,
    bytes: Vec<u8>,
}

impl Table {
    pub fn new<R: Serialize>(name: &'static str, command: &str, cfg: &ExperimentConfig, rows: &[R]) -> anyhow::Result<Self> {
        let mut bytes = format!(
            "# chldp {} command={} config_sha256={}\n",
            env!("CARGO_PKG_VERSION"),
            command,
            cfg.hash()
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut bytes);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Ok(Self { name, bytes })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(self.name);
        std::fs::write(&path, &self.bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
