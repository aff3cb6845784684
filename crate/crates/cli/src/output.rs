//! Atomic file output and machine-readable error documents.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use choquard_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use tempfile::NamedTempFile;

pub const ERROR_FILE: &str = "error.json";

/// Output directory, created on first use.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through a temporary file in the same directory, renamed
    /// into place only after a complete, flushed write.
    pub fn write_with<F>(&self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        fs::create_dir_all(&self.root)?;
        let target = self.file(name);
        let tmp = NamedTempFile::new_in(&self.root)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        1
    } else {
        2
    }
}

/// Error document with a stable `kind`.
pub fn error_document(err: &Error, command: &str) -> Value {
    let mut doc = json!({
        "schema": 1,
        "command": command,
        "kind": err.kind(),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    let details = match err {
        Error::MissingField(field) => Some(json!({ "field": field })),
        Error::KernelBuild { row, col, .. } => Some(json!({ "row": row, "col": col })),
        Error::UnknownName { family, name } => Some(json!({ "family": family, "name": name })),
        Error::NonConvergence { iterations, last_gradient, history } => {
            Some(json!({ "iterations": iterations, "last_gradient": last_gradient, "history": history }))
        }
        _ => None,
    };
    if let Some(d) = details {
        doc["details"] = d;
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::new(dir.path().join("nested"));
        out.write_with("a.txt", |w| Ok(w.write_all(b"first")?)).unwrap();
        out.write_with("a.txt", |w| Ok(w.write_all(b"second")?)).unwrap();
        assert_eq!(fs::read_to_string(out.file("a.txt")).unwrap(), "second");
    }

    #[test]
    fn failed_write_leaves_previous_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::new(dir.path().to_path_buf());
        out.write_with("a.txt", |w| Ok(w.write_all(b"intact")?)).unwrap();
        let err = out
            .write_with("a.txt", |w| {
                w.write_all(b"trunc")?;
                Err(Error::Range("interrupted".into()))
            })
            .unwrap_err();
        assert_eq!(err.kind(), "numeric.range");
        assert_eq!(fs::read_to_string(out.file("a.txt")).unwrap(), "intact");
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn error_documents_carry_kind_and_code() {
        let doc = error_document(&Error::MissingField("problem.mass".into()), "solve");
        assert_eq!(doc["kind"], "config.missing_field");
        assert_eq!(doc["exit_code"], 2);
        assert_eq!(doc["details"]["field"], "problem.mass");
        let doc = error_document(&Error::ProjectionFailure("x".into()), "solve");
        assert_eq!(doc["exit_code"], 1);
    }
}
