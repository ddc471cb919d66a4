use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::PipelineError;
use crate::seed::sha256_hex;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn artifact(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Artifact { path: path.to_path_buf(), message: message.to_string() }
}

/// Writes through a temporary sibling then renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| artifact(path, e))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| artifact(path, e))
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>, serde_json::Error> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let bytes = jsonl_bytes(items).map_err(|e| artifact(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| artifact(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Reads a checkpoint, ignoring a torn final line left by an interrupted
/// writer.
pub fn read_checkpoint<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    for (i, l) in lines.iter().enumerate() {
        match serde_json::from_str(l) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: dropping incomplete last line", path.display());
            }
            Err(e) => return Err(artifact(path, format!("line {}: {e}", i + 1))),
        }
    }
    if !text.is_empty() && !text.ends_with('\n') {
        // Rewrite without the torn tail so appends start on a fresh line.
        let mut kept = String::new();
        for l in &lines[..out.len()] {
            kept.push_str(l);
            kept.push('\n');
        }
        write_atomic(path, kept.as_bytes())?;
    }
    Ok(out)
}

pub fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(&jsonl_bytes(items).map_err(|e| artifact(path, e))?).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

pub fn file_hash(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

/// Hashes of `rel` under `root`: the file itself or, for a directory,
/// every file below it keyed by its path relative to `root`.
pub fn hash_tree(root: &Path, rel: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    let full = root.join(rel);
    if full.is_file() {
        out.insert(rel.to_string(), file_hash(&full)?);
    } else if full.is_dir() {
        let mut stack = vec![full];
        while let Some(dir) = stack.pop() {
            let mut entries: Vec<PathBuf> =
                std::fs::read_dir(&dir).map_err(io_err(&dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            entries.sort();
            for p in entries {
                if p.is_dir() {
                    stack.push(p);
                } else if p.extension().is_some_and(|e| e != "tmp") {
                    let key = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                    out.insert(key, file_hash(&p)?);
                }
            }
        }
    }
    Ok(out)
}

pub fn csv_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), PipelineError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(|e| artifact(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| artifact(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| artifact(path, e))?;
    write_atomic(path, &bytes)
}
