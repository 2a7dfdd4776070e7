use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use wishart_states::chunk::SampleChunk;

use crate::error::CliError;

/// Files written by one run. Unless [`Artifacts::commit`] is called, every
/// recorded file is deleted when this is dropped, so a failed run leaves no
/// partial output behind.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new(), committed: false })
    }

    /// Claims `name` inside the output directory.
    pub fn claim(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// Drops `path` from the record and deletes it.
    pub fn discard(&mut self, path: &Path) {
        self.written.retain(|p| p != path);
        let _ = std::fs::remove_file(path);
    }

    pub fn write_chunk(&mut self, name: &str, chunk: &SampleChunk) -> Result<(), CliError> {
        let p = self.claim(name);
        chunk.write_file(&p).map_err(|e| CliError::Io(format!("writing {}: {e}", p.display())))
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let p = self.claim(name);
        let mut w = csv::Writer::from_path(&p)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.claim(name);
        let mut w = BufWriter::new(File::create(&p)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.claim(name);
        std::fs::write(&p, text)?;
        Ok(())
    }

    /// Relative name and digest of every recorded file.
    pub fn digests(&self) -> Result<Vec<FileDigest>, CliError> {
        self.written
            .iter()
            .map(|p| {
                let name = p.strip_prefix(&self.dir).unwrap_or(p).display().to_string();
                Ok(FileDigest { path: name, sha256: sha256_file(p)?, bytes: std::fs::metadata(p)?.len() })
            })
            .collect()
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    let mut r = BufReader::new(File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
    std::io::copy(&mut r, &mut h)?;
    Ok(format!("{:x}", h.finalize()))
}

pub fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    format!("{:x}", Sha256::digest(bytes))
}

/// Peak resident set size in kB, from `/proc/self/status`.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Sample files given as one file or a directory of `*.qws` files, sorted
/// by name.
pub fn chunk_files(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "qws"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::config("input", format!("no .qws files in {}", input.display())));
        }
        Ok(files)
    } else if input.is_file() {
        Ok(vec![input.to_path_buf()])
    } else {
        Err(CliError::config("input", format!("{} does not exist", input.display())))
    }
}
