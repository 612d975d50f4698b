//! Line-delimited dataset manifests. Training lines are
//! `id <TAB> image-path <TAB> space-separated tags`; test lines are
//! `id <TAB> image-path <TAB> description A <TAB> description B [<TAB> gold]`.
//! Paths are resolved relative to the manifest file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::chooser::Choice;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TestRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub desc_a: Vec<String>,
    pub desc_b: Vec<String>,
    pub gold: Option<Choice>,
}

fn parse_error(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        detail: detail.into(),
    }
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn split_tokens(field: &str) -> Vec<String> {
    field.split_whitespace().map(|s| s.to_string()).collect()
}

/// Loads and validates a training manifest: unique ids, existing files,
/// nonempty tag lists.
pub fn load_train_manifest(path: &Path) -> Result<Vec<TrainRecord>> {
    let body = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in body.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_error(path, lineno, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_error(path, lineno, format!("duplicate id '{id}'")));
        }
        let image_path = resolve(base, fields[1].trim());
        if !image_path.exists() {
            return Err(parse_error(
                path,
                lineno,
                format!("referenced file {} does not exist", image_path.display()),
            ));
        }
        let tags = split_tokens(fields[2]);
        if tags.is_empty() {
            return Err(parse_error(path, lineno, "empty tag list"));
        }
        records.push(TrainRecord {
            id,
            image_path,
            tags,
        });
    }
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "manifest {} has no records",
            path.display()
        )));
    }
    Ok(records)
}

/// Loads and validates a test manifest of candidate-pair triples.
pub fn load_test_manifest(path: &Path) -> Result<Vec<TestRecord>> {
    let body = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in body.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(parse_error(
                path,
                lineno,
                format!(
                    "expected 4 or 5 tab-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_error(path, lineno, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_error(path, lineno, format!("duplicate id '{id}'")));
        }
        let image_path = resolve(base, fields[1].trim());
        if !image_path.exists() {
            return Err(parse_error(
                path,
                lineno,
                format!("referenced file {} does not exist", image_path.display()),
            ));
        }
        let desc_a = split_tokens(fields[2]);
        let desc_b = split_tokens(fields[3]);
        if desc_a.is_empty() || desc_b.is_empty() {
            return Err(parse_error(path, lineno, "empty candidate description"));
        }
        let gold = match fields.get(4) {
            Some(g) => Some(
                Choice::parse(g.trim())
                    .map_err(|_| parse_error(path, lineno, format!("bad gold label '{g}'")))?,
            ),
            None => None,
        };
        records.push(TestRecord {
            id,
            image_path,
            desc_a,
            desc_b,
            gold,
        });
    }
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "manifest {} has no records",
            path.display()
        )));
    }
    Ok(records)
}
