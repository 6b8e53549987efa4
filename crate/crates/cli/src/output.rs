//! Run directory: every file is validated in memory, written to a temporary
//! sibling and renamed into place, so a failed run leaves no partial output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use andikit::network::Checkpoint;
use andikit::trajgen::read_dataset;

use crate::error::CliError;

/// Schema an output file is checked against before it is committed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    /// Header line plus rows of the same width; blank lines start a new
    /// section and `#` lines are comments.
    Csv,
    Json,
    Toml,
    Dataset,
    Checkpoint,
}

pub fn validate(bytes: &[u8], schema: Schema) -> Result<(), String> {
    match schema {
        Schema::Csv => validate_csv(std::str::from_utf8(bytes).map_err(|e| e.to_string())?),
        Schema::Json => serde_json::from_slice::<serde_json::Value>(bytes)
            .map(drop)
            .map_err(|e| e.to_string()),
        Schema::Toml => std::str::from_utf8(bytes)
            .map_err(|e| e.to_string())?
            .parse::<toml::Table>()
            .map(drop)
            .map_err(|e| e.to_string()),
        Schema::Dataset => match read_dataset(bytes) {
            Ok(d) if d.is_empty() => Err("dataset has no records".into()),
            Ok(_) => Ok(()),
            Err(e) => Err(e.to_string()),
        },
        Schema::Checkpoint => Checkpoint::read(bytes).map(drop).map_err(|e| e.to_string()),
    }
}

fn validate_csv(text: &str) -> Result<(), String> {
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            width = None;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let n = line.split(',').count();
        match width {
            None => width = Some(n),
            Some(w) if w != n => return Err(format!("line {}: {n} fields, header has {w}", i + 1)),
            Some(_) => rows += 1,
        }
    }
    if rows == 0 {
        return Err("no data rows".into());
    }
    Ok(())
}

pub struct RunDir {
    root: PathBuf,
    inputs: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl RunDir {
    /// Creates `root`; `inputs` are files the run reads and must never overwrite.
    pub fn create(root: &Path, inputs: &[PathBuf]) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        let inputs = inputs.iter().filter_map(|p| fs::canonicalize(p).ok()).collect();
        Ok(Self {
            root: root.to_path_buf(),
            inputs,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], schema: Schema) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        validate(bytes, schema).map_err(|e| CliError::output(&path, e))?;
        if let Ok(existing) = fs::canonicalize(&path) {
            if self.inputs.contains(&existing) {
                return Err(CliError::output(&path, "refusing to overwrite an input file"));
            }
        }
        let tmp = self.root.join(format!(".{name}.tmp"));
        let commit = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = commit() {
            let _ = fs::remove_file(&tmp);
            return Err(CliError::output(&path, e));
        }
        let back = fs::read(&path).map_err(|e| CliError::output(&path, e))?;
        if back != bytes {
            return Err(CliError::output(&path, "read-back differs from what was written"));
        }
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::output(&self.root.join(name), e))?;
        bytes.push(b'\n');
        self.write(name, &bytes, Schema::Json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_sections_may_differ_in_width() {
        assert!(validate_csv("a,b\n1,2\n\n# note\nx,y,z\n1,2,3\n").is_ok());
        assert!(validate_csv("a,b\n1,2,3\n").is_err());
        assert!(validate_csv("a,b\n").is_err());
    }

    #[test]
    fn invalid_output_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path(), &[]).unwrap();
        assert!(matches!(run.write("x.json", b"{", Schema::Json), Err(CliError::Output { .. })));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        run.write("x.json", b"{}", Schema::Json).unwrap();
        assert_eq!(run.written().len(), 1);
    }

    #[test]
    fn inputs_are_never_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        fs::write(&input, "a\n1\n").unwrap();
        let mut run = RunDir::create(dir.path(), std::slice::from_ref(&input)).unwrap();
        assert!(run.write("in.csv", b"a\n2\n", Schema::Csv).is_err());
        assert_eq!(fs::read_to_string(&input).unwrap(), "a\n1\n");
    }
}
