//! Line-record plumbing shared by every file format.
//!
//! Records are whitespace-separated tokens, one record per line. Blank lines
//! and lines starting with `#` are skipped. Floats are written with Rust's
//! shortest round-trip formatting, so write-then-read is bit exact.

use std::fmt::{self, Display, Write as _};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: unsupported {what} version {found} (expected {expected})")]
    FormatVersionMismatch { path: String, what: &'static str, found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl FormatError {
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// One non-comment line being parsed, for positioned error messages.
pub struct Line<'a> {
    pub path: &'a str,
    pub number: usize,
    pub text: &'a str,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Line<'a> {
    pub fn error(&self, message: impl Display) -> FormatError {
        FormatError::Parse { path: self.path.to_string(), line: self.number, message: message.to_string() }
    }

    pub fn word(&mut self, what: &str) -> Result<&'a str, FormatError> {
        self.tokens.next().ok_or_else(|| self.error(format_args!("missing {what}")))
    }

    pub fn parse<T: FromStr>(&mut self, what: &str) -> Result<T, FormatError> {
        let w = self.word(what)?;
        w.parse().map_err(|_| self.error(format_args!("bad {what} {w:?}")))
    }

    pub fn floats<const N: usize>(&mut self, what: &str) -> Result<[f64; N], FormatError> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.parse(what)?;
        }
        Ok(out)
    }

    pub fn float_vec(&mut self, len: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        (0..len).map(|_| self.parse(what)).collect()
    }

    /// `key=value` token with a fixed key.
    pub fn keyed<T: FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let w = self.word(key)?;
        let v = w
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.error(format_args!("expected {key}=..., found {w:?}")))?;
        v.parse().map_err(|_| self.error(format_args!("bad {key} {v:?}")))
    }

    /// Everything left on the line, trimmed; used for free text in the last field.
    pub fn rest(&mut self) -> String {
        let rest: Vec<&str> = self.tokens.by_ref().collect();
        rest.join(" ")
    }

    pub fn finish(mut self) -> Result<(), FormatError> {
        self.finish_ref()
    }

    /// Fail if any token is left, keeping the line around for later messages.
    pub fn finish_ref(&mut self) -> Result<(), FormatError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(extra) => Err(self.error(format_args!("unexpected trailing field {extra:?}"))),
        }
    }
}

/// Records of `text` with their 1-based line numbers.
pub fn lines<'a>(path: &'a str, text: &'a str) -> impl Iterator<Item = Line<'a>> {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let t = raw.trim();
        (!t.is_empty() && !t.starts_with('#')).then(|| Line { path, number: i + 1, text: t, tokens: t.split_whitespace() })
    })
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

/// Write `contents` to a temporary file beside `path`, then rename it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), FormatError> {
    let io = |source| FormatError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Space-separated record builder.
#[derive(Default)]
pub struct Record(String);

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: impl Display) -> &mut Self {
        if !self.0.is_empty() {
            self.0.push(' ');
        }
        let _ = write!(self.0, "{v}");
        self
    }

    pub fn floats(&mut self, vs: &[f64]) -> &mut Self {
        for v in vs {
            self.push(v);
        }
        self
    }

    pub fn keyed(&mut self, key: &str, v: impl Display) -> &mut Self {
        self.push(format_args!("{key}={v}"))
    }

    pub fn line(&mut self, out: &mut String) {
        out.push_str(&self.0);
        out.push('\n');
        self.0.clear();
    }
}

impl Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bit_exact() {
        let vals = [0.1, -1e-300, 1.0 / 3.0, f64::MAX, 5e-324, -0.0, f64::NAN, f64::INFINITY];
        let mut r = Record::new();
        r.floats(&vals);
        let text = r.to_string();
        let mut line = lines("t", &text).next().unwrap();
        let back: [f64; 8] = line.floats("v").unwrap();
        for (a, b) in vals.iter().zip(back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# header\n\nok 1\nbad x\n";
        let mut it = lines("f.txt", text);
        let mut first = it.next().unwrap();
        assert_eq!(first.number, 3);
        first.word("name").unwrap();
        assert_eq!(first.parse::<u32>("n").unwrap(), 1);
        let mut second = it.next().unwrap();
        second.word("name").unwrap();
        let err = second.parse::<u32>("n").unwrap_err();
        assert_eq!(err.line(), Some(4));
        assert_eq!(err.to_string(), "f.txt:4: bad n \"x\"");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
