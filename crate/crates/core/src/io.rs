//! Artifact plumbing: provenance headers, digests and atomic writes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// File name without directories, so artifacts do not depend on where
    /// the run happened.
    pub name: String,
    pub sha256: String,
}

/// Where an artifact came from. Contains no timestamps or absolute paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Provenance {
            tool_version: crate::TOOL_VERSION.to_string(),
            command: command.to_string(),
            seed: None,
            inputs: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Records the digest of an input file.
    pub fn with_input(mut self, path: &Path) -> Result<Self> {
        let sha256 = sha256_file(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.inputs.push(InputDigest { name, sha256 });
        Ok(self)
    }

    /// `#`-prefixed lines for the top of a CSV artifact.
    pub fn header_lines(&self) -> String {
        let mut out = format!("# tool: {}\n# command: {}\n", self.tool_version, self.command);
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        for input in &self.inputs {
            out.push_str(&format!("# input: {} sha256:{}\n", input.name, input.sha256));
        }
        out
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Builds a CSV document prefixed with provenance comment lines.
pub fn csv_document(
    provenance: Option<&Provenance>,
    fill: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(p) = provenance {
        buf.extend_from_slice(p.header_lines().as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w).map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))?;
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))?;
    }
    Ok(buf)
}

/// CSV reader that skips `#` comment lines.
pub fn csv_reader<R: std::io::Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader)
}

/// Shortest round-trip representation; empty for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn atomic_write_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, b"abc").unwrap();
        let prov = Provenance::new("test").with_seed(7).with_input(&input).unwrap();
        let doc = csv_document(Some(&prov), |w| {
            w.write_record(["a", "b"])?;
            w.write_record(["1", "2"])
        })
        .unwrap();
        let out = dir.path().join("sub/out.csv");
        write_atomic(&out, &doc).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains("# seed: 7\n"));
        assert!(text.contains("# input: in.txt sha256:ba7816bf"));
        assert!(text.ends_with("a,b\n1,2\n"));
        let mut rdr = csv_reader(text.as_bytes());
        assert_eq!(rdr.headers().unwrap(), vec!["a", "b"]);
    }
}
