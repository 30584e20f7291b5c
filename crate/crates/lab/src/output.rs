//! In-memory CSV artifacts and the single writer that puts them on disk.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use oampi_core::{Policy, QTable};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// A file produced by an experiment, relative to the output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub contents: String,
}

/// How a file records the seed(s) it belongs to.
#[derive(Clone, Copy, Debug)]
pub enum SeedTag<'a> {
    /// The whole file belongs to one seed.
    Single(u64),
    /// Rows carry their seed in a `seed` column.
    Column,
    /// The file aggregates these seeds.
    All(&'a [u64]),
}

/// Compact seed list: `a..b` for a contiguous ascending run, else comma-separated.
pub fn format_seeds(seeds: &[u64]) -> String {
    let contiguous = seeds.len() > 1 && seeds.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous {
        format!("{}..{}", seeds[0], seeds[seeds.len() - 1])
    } else {
        seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    }
}

/// Builds a CSV file with a `# config_hash=... seed=...` preamble.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
    preamble: String,
    rows: usize,
}

impl CsvTable {
    pub fn new(config_hash: &str, seed: SeedTag<'_>, header: &[&str]) -> Self {
        let preamble = match seed {
            SeedTag::Single(seed) => format!("# config_hash={config_hash} seed={seed}\n"),
            SeedTag::Column => format!("# config_hash={config_hash} seed=column\n"),
            SeedTag::All(seeds) => {
                format!("# config_hash={config_hash} seeds={}\n", format_seeds(seeds))
            }
        };
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self {
            writer,
            preamble,
            rows: 0,
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(self, path: impl Into<PathBuf>) -> Artifact {
        let body = self.writer.into_inner().expect("in-memory flush");
        let mut contents = self.preamble;
        contents.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        Artifact {
            path: path.into(),
            contents,
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Like [`num`] but empty for missing values.
pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `(state, action, value)` rows for a Q table.
pub fn q_table(config_hash: &str, seed: u64, q: &QTable, path: impl Into<PathBuf>) -> Artifact {
    let mut t = CsvTable::new(config_hash, SeedTag::Single(seed), &["state", "action", "value"]);
    for s in 0..q.n_states() {
        for a in 0..q.n_actions() {
            t.row([s.to_string(), a.to_string(), num(q.get(s, a))]);
        }
    }
    t.finish(path)
}

/// `(state, action, value)` rows for a policy.
pub fn policy_table(
    config_hash: &str,
    seed: u64,
    pi: &Policy,
    path: impl Into<PathBuf>,
) -> Artifact {
    let q = QTable::new(pi.n_states(), pi.n_actions(), pi.probs().to_vec())
        .expect("policy shape is a table shape");
    q_table(config_hash, seed, &q, path)
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
    bytes: usize,
}

/// The machine-readable run record written next to the CSV files.
#[derive(Serialize)]
pub struct Manifest<'a, S: Serialize> {
    pub tool: &'a str,
    pub version: &'a str,
    pub experiment: &'a str,
    pub config_hash: &'a str,
    pub seeds: &'a [u64],
    pub summary: S,
}

/// Writes `artifacts` and `manifest.json` under `dir`, in order.
pub fn write_all<S: Serialize>(
    dir: &Path,
    artifacts: &[Artifact],
    manifest: &Manifest<'_, S>,
) -> io::Result<()> {
    let files: Vec<ManifestFile> = artifacts
        .iter()
        .map(|a| ManifestFile {
            path: a.path.to_string_lossy().replace('\\', "/"),
            sha256: hex::encode(Sha256::digest(a.contents.as_bytes())),
            bytes: a.contents.len(),
        })
        .collect();
    for artifact in artifacts {
        let path = dir.join(&artifact.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &artifact.contents)?;
    }
    let mut value = serde_json::to_value(manifest).map_err(io::Error::other)?;
    value["files"] = serde_json::to_value(files).map_err(io::Error::other)?;
    let mut text = serde_json::to_string_pretty(&value).map_err(io::Error::other)?;
    text.push('\n');
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), text)
}
