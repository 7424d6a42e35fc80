//! CSV artifacts and the run manifest. Only the manifest carries
//! timestamps, so reruns reproduce the CSV byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use qex::config::Constants;

use crate::Failure;

pub struct Run {
    pub dir: PathBuf,
    pub command: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub resolved: toml::Table,
    started: SystemTime,
    clock: Instant,
    files: Vec<String>,
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Check(format!("{}: {e}", path.display()))
}

impl Run {
    pub fn new(dir: PathBuf, command: &'static str, seed: u64, workers: usize) -> Self {
        Self {
            dir,
            command,
            seed,
            workers,
            resolved: toml::Table::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    /// `<command>.manifest.toml`: config echo, versions, constants, timing.
    pub fn finish(mut self, consts: &Constants, status: &str) -> Result<(), Failure> {
        let mut run = toml::Table::new();
        run.insert("command".into(), self.command.into());
        run.insert("status".into(), status.into());
        run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        run.insert("seed".into(), toml::Value::String(self.seed.to_string()));
        run.insert("workers".into(), (self.workers as i64).into());
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        run.insert("started_unix".into(), (started as i64).into());
        run.insert("wall_time_s".into(), self.clock.elapsed().as_secs_f64().into());
        run.insert("files".into(), toml::Value::Array(self.files.iter().map(|f| f.as_str().into()).collect()));
        let mut table = toml::Table::new();
        table.insert("run".into(), run.into());
        table.insert("config".into(), std::mem::take(&mut self.resolved).into());
        let mut c = toml::Table::new();
        for (k, v) in consts.iter() {
            c.insert(k.into(), v.into());
        }
        table.insert("constants".into(), c.into());
        let text = toml::to_string(&table).map_err(|e| Failure::Check(e.to_string()))?;
        let name = format!("{}.manifest.toml", self.command);
        self.write(&name, &text)?;
        Ok(())
    }
}
