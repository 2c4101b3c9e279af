use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<usize, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| CliError::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| CliError::io(path, e))?;
    Ok(n)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e.into()))? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn resolved(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Refuses to overwrite any of the command's inputs.
pub fn guard_outputs<'a>(
    inputs: impl IntoIterator<Item = &'a Path>,
    outputs: impl IntoIterator<Item = &'a Path>,
) -> Result<(), CliError> {
    let inputs: Vec<PathBuf> = inputs.into_iter().map(resolved).collect();
    for out in outputs {
        if inputs.contains(&resolved(out)) {
            return Err(CliError::Usage(format!("output {} would overwrite an input", out.display())));
        }
    }
    Ok(())
}
