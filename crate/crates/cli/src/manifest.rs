//! Run manifests: what a command read, how it was configured, what it wrote.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub params: serde_json::Value,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Tracks a command's inputs and outputs inside one output directory.
#[derive(Debug)]
pub struct Recorder {
    out: PathBuf,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Recorder {
    pub fn new(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Paths inside the output directory are recorded relative to it.
    fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.out)
            .unwrap_or(path)
            .display()
            .to_string()
    }

    /// Records bytes that came from somewhere other than a file.
    pub fn input_bytes(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.push(FileHash {
            path: label.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes =
            std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let label = self.label(path);
        self.input_bytes(&label, &bytes);
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `<command>.manifest.json`.
    pub fn finish(
        self,
        command: &str,
        params: serde_json::Value,
        config: serde_json::Value,
    ) -> Result<()> {
        let manifest = Manifest {
            command: command.to_string(),
            params,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.out.join(format!("{command}.manifest.json"));
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn paths_inside_out_are_relative() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = Recorder::new(dir.path()).unwrap();
        rec.write("a.txt", b"x").unwrap();
        let back = rec.read(&dir.path().join("a.txt")).unwrap();
        assert_eq!(back, b"x");
        rec.finish("demo", serde_json::json!({}), serde_json::json!({}))
            .unwrap();
        let text = std::fs::read_to_string(dir.path().join("demo.manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["inputs"][0]["path"], "a.txt");
        assert_eq!(v["outputs"][0]["sha256"], sha256_hex(b"x"));
    }
}
