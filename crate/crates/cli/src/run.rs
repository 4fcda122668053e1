use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory of one run: config echo, log lines and artifacts.
pub struct RunDir {
    dir: PathBuf,
    log: Vec<String>,
}

#[derive(Serialize)]
struct ConfigEcho<'a, T: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    args: &'a T,
}

impl RunDir {
    pub fn create<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let echo = ConfigEcho {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            args,
        };
        let run = RunDir {
            dir: dir.to_path_buf(),
            log: Vec::new(),
        };
        run.write("config.json", &serde_json::to_string_pretty(&echo)?)?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// Prints a line and keeps it for `run.log`.
    pub fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        println!("{line}");
        self.log.push(line);
    }

    pub fn finish(self) -> Result<()> {
        let mut s = self.log.join("\n");
        s.push('\n');
        self.write("run.log", &s)?;
        Ok(())
    }
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
