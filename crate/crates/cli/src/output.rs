//! Output directory bookkeeping and the file writers.

use std::fs;
use std::path::{Path, PathBuf};

use helical_core::linalg::CMat;
use helical_core::hamiltonian::matrix_entries;
use serde::Serialize;

use crate::run::RunError;

/// Writes files into one directory and remembers their names for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, RunError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| RunError::io(&root, e))?;
        Ok(OutputDir {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("output serializes");
        fs::write(&path, text + "\n").map_err(|e| RunError::io(&path, e))
    }

    /// A CSV file with a header row; `rows` yields pre-formatted fields.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), RunError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.path(name);
        let fail = |e: csv::Error| RunError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(fail)?;
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        w.flush().map_err(|e| RunError::io(&path, e))
    }

    /// `row,col,re,im` for every entry.
    pub fn matrix(&mut self, name: &str, m: &CMat) -> Result<(), RunError> {
        self.csv(
            name,
            &["row", "col", "re", "im"],
            matrix_entries(m).map(|(r, c, re, im)| [r.to_string(), c.to_string(), num(re), num(im)]),
        )
    }
}

/// Shortest round-tripping form; `nan` for non-finite values.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        "nan".to_string()
    }
}

/// A time as it appears in file names: `7.9`, `1`.
pub fn time_tag(t: f64) -> String {
    format!("{t}")
}
