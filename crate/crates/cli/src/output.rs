use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use powersplit::pipeline::ToolInfo;
use serde::Serialize;

/// Envelope shared by every JSON report.
#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    tool: ToolInfo,
    command: &'a str,
    seed: u64,
    config: &'a C,
    result: &'a R,
}

pub struct Output {
    dir: PathBuf,
    seed: u64,
}

impl Output {
    pub fn new(dir: &Path, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `<stem>.json`.
    pub fn json<C: Serialize, R: Serialize>(
        &self,
        stem: &str,
        command: &str,
        config: &C,
        result: &R,
    ) -> Result<()> {
        let report = Report {
            tool: ToolInfo::default(),
            command,
            seed: self.seed,
            config,
            result,
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        let path = self.path(&format!("{stem}.json"));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    /// Writes `<stem>.csv` with one row per record.
    pub fn csv<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<()> {
        let path = self.path(&format!("{stem}.csv"));
        let mut w =
            csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
