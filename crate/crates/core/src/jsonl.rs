//! Line-delimited JSON reading and writing shared by every fixture format.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A malformed line in a line-delimited file. Line numbers are 1-based.
#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

impl JsonlError {
    pub fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        JsonlError::Format {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        JsonlError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Parse every non-blank line of `path` as `T`, paired with its line number.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, JsonlError> {
    let text = fs::read_to_string(path).map_err(|e| JsonlError::io(path, e))?;
    parse_records(path, &text)
}

pub(crate) fn parse_records<T: DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<Vec<(usize, T)>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line)
            .map_err(|e| JsonlError::format(path, idx + 1, e.to_string()))?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

/// Serialize `records` one per line. The file is replaced atomically enough for
/// fixtures: written in full, then renamed over the target.
pub fn write_records<'a, T, I>(path: &Path, records: I) -> Result<(), JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)
            .map_err(|e| JsonlError::io(path, io::Error::other(e)))?;
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| JsonlError::io(path, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| JsonlError::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| JsonlError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| JsonlError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_line_numbers() {
        let p = Path::new("x.jsonl");
        let err = parse_records::<serde_json::Value>(p, "{}\n\n{oops\n").unwrap_err();
        match err {
            JsonlError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_lines_skipped() {
        let p = Path::new("x.jsonl");
        let recs = parse_records::<u32>(p, "1\n\n  \n2\n").unwrap();
        assert_eq!(recs, vec![(1, 1), (4, 2)]);
    }
}
