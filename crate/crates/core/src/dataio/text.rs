use std::fs;
use std::path::Path;

use crate::error::{Error, ParseErrorKind, Result};

/// Lines of a file with 1-based line numbers. A single trailing newline is
/// allowed; anything else after the content is left to the caller to reject.
pub(crate) struct Lines {
    pub path: String,
    lines: Vec<(usize, String)>,
    pos: usize,
}

impl Lines {
    pub fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&path.display().to_string(), &text))
    }

    pub fn from_text(path: &str, text: &str) -> Self {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let lines = if body.is_empty() {
            Vec::new()
        } else {
            body.split('\n').enumerate().map(|(i, l)| (i + 1, l.to_string())).collect()
        };
        Lines {
            path: path.to_string(),
            lines,
            pos: 0,
        }
    }

    pub fn next_line(&mut self) -> Option<(usize, String)> {
        let (n, l) = self.lines.get(self.pos)?.clone();
        self.pos += 1;
        Some((n, l))
    }

    /// Line number the next call would report; used for end-of-file errors.
    pub fn next_number(&self) -> usize {
        self.lines.get(self.pos).map_or(self.lines.len() + 1, |(n, _)| *n)
    }

    pub fn err(&self, line: usize, kind: ParseErrorKind) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            kind,
        }
    }

    /// Rejects any remaining line.
    pub fn finish(mut self) -> Result<()> {
        match self.next_line() {
            None => Ok(()),
            Some((n, _)) => Err(self.err(n, ParseErrorKind::Trailing)),
        }
    }
}

pub(crate) fn fields(line: &str) -> Vec<&str> {
    line.split_ascii_whitespace().collect()
}

pub(crate) fn parse_f64(tok: &str) -> std::result::Result<f64, ParseErrorKind> {
    let x: f64 = tok.parse().map_err(|_| ParseErrorKind::Number(tok.to_string()))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ParseErrorKind::NonFinite(tok.to_string()))
    }
}

pub(crate) fn parse_usize(tok: &str) -> std::result::Result<usize, ParseErrorKind> {
    tok.parse().map_err(|_| ParseErrorKind::Number(tok.to_string()))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Ids and categorical tokens must be single non-empty whitespace-free words.
pub(crate) fn check_token(tok: &str) -> Result<()> {
    if tok.is_empty() || tok.chars().any(char::is_whitespace) {
        return Err(Error::contract("write", format!("invalid token `{tok}`")));
    }
    Ok(())
}
