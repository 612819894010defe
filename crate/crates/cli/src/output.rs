use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Output directory plus the list of files a command has written, in order.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for `name`, recorded as written.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text record of how the outputs were produced.
    pub fn manifest(&mut self, cfg: &RunConfig, command: &str, started: Instant) -> Result<(), CliError> {
        let snapshot = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
        // Header lines are comments so the manifest can be passed back as --config.
        let mut s = String::new();
        s.push_str(&format!("# command: {command}\n"));
        s.push_str(&format!("# seed: {}\n", cfg.run.seed));
        s.push_str(&format!("# proxyrecon: {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("# wall_time_s: {:.3}\n", started.elapsed().as_secs_f64()));
        s.push_str("# outputs:\n");
        for o in &self.written {
            s.push_str(&format!("#   {o}\n"));
        }
        s.push('\n');
        s.push_str(&snapshot);
        let name = format!("manifest_{}.txt", command.replace('-', "_"));
        let p = self.dir.join(&name);
        std::fs::write(&p, s).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))?;
        let latest = self.dir.join("manifest.txt");
        std::fs::copy(&p, &latest).map_err(|e| CliError::Data(format!("cannot write {}: {e}", latest.display())))?;
        Ok(())
    }
}

/// Shortest representation that reads back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
