//! Plain-text formats shared by media files, solution dumps, and manifests.
//!
//! Matrix format: first line "nrows ncols", then nrows lines of ncols decimal
//! values, bottom grid row first (row index 0). Values print via Rust's
//! shortest round-trip float formatting, so write→read is exact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) fn format_matrix(nrows: usize, ncols: usize, values: &[f64]) -> String {
    debug_assert_eq!(values.len(), nrows * ncols);
    let mut out = String::new();
    let _ = writeln!(out, "{nrows} {ncols}");
    for r in 0..nrows {
        let row = &values[r * ncols..(r + 1) * ncols];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parse one matrix from `lines`, consuming exactly the lines it needs.
pub(crate) fn parse_matrix_lines<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    path: &Path,
) -> Result<(usize, usize, Vec<f64>)> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let header = lines
        .next()
        .ok_or_else(|| err("missing matrix header".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(err(format!("bad header {header:?}, want \"nrows ncols\"")));
    }
    let nrows: usize = dims[0]
        .parse()
        .map_err(|_| err(format!("bad row count {:?}", dims[0])))?;
    let ncols: usize = dims[1]
        .parse()
        .map_err(|_| err(format!("bad column count {:?}", dims[1])))?;
    let mut values = Vec::with_capacity(nrows * ncols);
    for r in 0..nrows {
        let line = lines
            .next()
            .ok_or_else(|| err(format!("missing row {r} of {nrows}")))?;
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(format!("row {r}: bad value {tok:?}")))?;
            values.push(v);
            count += 1;
        }
        if count != ncols {
            return Err(err(format!("row {r} has {count} values, want {ncols}")));
        }
    }
    Ok((nrows, ncols, values))
}

pub(crate) fn parse_matrix(text: &str, path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text.lines();
    let out = parse_matrix_lines(&mut lines, path)?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "trailing data after matrix".into(),
        });
    }
    Ok(out)
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse "role value" lines; blank lines ignored.
pub(crate) fn parse_role_lines(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(role), Some(value), None) => out.push((role.to_string(), value.to_string())),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("line {}: want \"role value\", got {line:?}", i + 1),
                })
            }
        }
    }
    Ok(out)
}

/// Resolve a possibly-relative path against the directory of `base`.
pub(crate) fn sibling(base: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match base.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
        _ => p.to_path_buf(),
    }
}
