//! Outputs are written to a scratch directory and moved into the run
//! directory only once the whole command has succeeded.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::CliResult;

pub struct Staging {
    target: PathBuf,
    scratch: TempDir,
    files: Vec<String>,
}

impl Staging {
    pub fn new(target: &Path) -> CliResult<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let scratch = tempfile::Builder::new().prefix(".iqn-rnn-staging").tempdir_in(parent)?;
        Ok(Self {
            target: target.to_path_buf(),
            scratch,
            files: Vec::new(),
        })
    }

    /// Writes `name` through `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let mut out = BufWriter::new(File::create(self.scratch.path().join(name))?);
        fill(&mut out)?;
        out.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(iqn_rnn::Error::from)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Moves every staged file into the run directory.
    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(&self.target)?;
        self.files
            .iter()
            .map(|name| {
                let dest = self.target.join(name);
                fs::rename(self.scratch.path().join(name), &dest)?;
                Ok(dest)
            })
            .collect()
    }
}
