//! CSV and manifest writers, and the edge-list reader.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use psfggm::fdata::format_float;
use psfggm::graphs::EdgeSet;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Output directory with a record of every file written into it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through `fill`, mapping any failure to an I/O error.
    pub fn write<F>(&mut self, name: &str, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let wrap = |source| CliError::Write {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(wrap)?;
        let mut w = BufWriter::new(file);
        fill(&mut w).map_err(wrap)?;
        w.flush().map_err(wrap)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub fn num(x: f64) -> String {
    format_float(x)
}

/// `l,j,k` rows with 1-based component indices; `l = 0` is the union.
pub fn write_edges(w: &mut dyn Write, union: &EdgeSet, per_basis: &[EdgeSet]) -> std::io::Result<()> {
    writeln!(w, "l,j,k")?;
    for (j, k) in union.iter() {
        writeln!(w, "0,{},{}", j + 1, k + 1)?;
    }
    for (l, set) in per_basis.iter().enumerate() {
        for (j, k) in set.iter() {
            writeln!(w, "{},{},{}", l + 1, j + 1, k + 1)?;
        }
    }
    Ok(())
}

/// Union graph from an edge list written by [`write_edges`]. Rows with
/// `l = 0` are used when present, otherwise all rows are merged.
pub fn read_union(path: &Path, p: usize) -> CliResult<EdgeSet> {
    let read_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Core(psfggm::Error::Parse {
            line: 0,
            message: format!("{}: {other:?}", path.display()),
        }),
    };
    let mut reader = csv::Reader::from_path(path).map_err(read_err)?;
    let headers = reader.headers().map_err(read_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["l", "j", "k"] {
        return Err(psfggm::Error::Parse {
            line: 1,
            message: format!("{}: expected header l,j,k", path.display()),
        }
        .into());
    }
    let mut union = EdgeSet::empty(p);
    let mut all = EdgeSet::empty(p);
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(read_err)?;
        let line = row + 2;
        let field = |i: usize| -> CliResult<usize> {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| {
                    psfggm::Error::Parse {
                        line,
                        message: format!("{}: expected nonnegative integers", path.display()),
                    }
                    .into()
                })
        };
        let (l, j, k) = (field(0)?, field(1)?, field(2)?);
        if j == 0 || k == 0 || j > p || k > p {
            return Err(psfggm::Error::Parse {
                line,
                message: format!("component index out of 1..={p}"),
            }
            .into());
        }
        all.insert(j - 1, k - 1)?;
        if l == 0 {
            union.insert(j - 1, k - 1)?;
        }
    }
    Ok(if union.is_empty() { all } else { union })
}

pub fn write_matrix(w: &mut dyn Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| num(m[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: C,
    pub deviations: Vec<String>,
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

pub fn write_manifest<C: Serialize>(out: &mut OutDir, manifest: &Manifest<C>) -> CliResult<()> {
    let mut manifest_json = serde_json::to_value(manifest)
        .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    manifest_json["outputs"] = serde_json::json!(out.written());
    let text = serde_json::to_string_pretty(&manifest_json)
        .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    out.write("manifest.json", |w| writeln!(w, "{text}"))
}
