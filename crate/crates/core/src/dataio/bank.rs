use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::text::{self, Lines};
use crate::error::{Error, ParseErrorKind, Result};
use crate::numcore::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Face,
    Voice,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Face => "face",
            Modality::Voice => "voice",
        })
    }
}

impl FromStr for Modality {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face" => Ok(Modality::Face),
            "voice" => Ok(Modality::Voice),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

/// Precomputed encoder outputs for one modality: one row per instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBank {
    modality: Modality,
    ids: Vec<String>,
    vectors: Matrix<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingBank {
    pub fn new(modality: Modality, ids: Vec<String>, vectors: Matrix<f64>) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::contract(
                "EmbeddingBank::new",
                format!("{} ids for {} vectors", ids.len(), vectors.rows()),
            ));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            text::check_token(id)?;
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::contract("EmbeddingBank::new", format!("duplicate id `{id}`")));
            }
        }
        Ok(EmbeddingBank {
            modality,
            ids,
            vectors,
            index,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn vectors(&self) -> &Matrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "FVBANK 1 {} {} {}", self.len(), self.dim(), self.modality);
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for x in self.vectors.row(i) {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(path: &str, text: &str) -> Result<Self> {
        parse(Lines::from_text(path, text))
    }
}

pub fn write_bank(bank: &EmbeddingBank, path: &Path) -> Result<()> {
    text::write_file(path, &bank.to_text())
}

pub fn read_bank(path: &Path) -> Result<EmbeddingBank> {
    parse(Lines::open(path)?)
}

fn parse(mut lines: Lines) -> Result<EmbeddingBank> {
    let (hn, header) = lines
        .next_line()
        .ok_or_else(|| lines.err(1, ParseErrorKind::Header("empty file".into())))?;
    let h = text::fields(&header);
    if h.len() != 5 || h[0] != "FVBANK" || h[1] != "1" {
        return Err(lines.err(hn, ParseErrorKind::Header(header.clone())));
    }
    let n = text::parse_usize(h[2]).map_err(|k| lines.err(hn, k))?;
    let dim = text::parse_usize(h[3]).map_err(|k| lines.err(hn, k))?;
    let modality: Modality = h[4].parse().map_err(|k| lines.err(hn, k))?;

    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut seen = HashMap::with_capacity(n);
    for _ in 0..n {
        let ln = lines.next_number();
        let Some((ln, line)) = lines.next_line() else {
            return Err(lines.err(ln, ParseErrorKind::RowCount { expected: n, found: ids.len() }));
        };
        let f = text::fields(&line);
        if f.len() != dim + 1 {
            return Err(lines.err(ln, ParseErrorKind::FieldCount { expected: dim + 1, found: f.len() }));
        }
        for tok in &f[1..] {
            data.push(text::parse_f64(tok).map_err(|k| lines.err(ln, k))?);
        }
        if seen.insert(f[0].to_string(), ln).is_some() {
            return Err(lines.err(ln, ParseErrorKind::Duplicate(f[0].to_string())));
        }
        ids.push(f[0].to_string());
    }
    lines.finish()?;
    let vectors = Matrix::from_vec(n, dim, data)?;
    EmbeddingBank::new(modality, ids, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn random_bank(rows: usize, dim: usize, seed: u64) -> EmbeddingBank {
        let mut rng = Rng::new(seed);
        let m = Matrix::from_fn(rows, dim, |_, _| rng.normal() * 10f64.powi(rng.below(9) as i32 - 4));
        let ids = (0..rows).map(|i| format!("x{i}")).collect();
        EmbeddingBank::new(Modality::Voice, ids, m).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bank = random_bank(16, 8, 5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bank");
        write_bank(&bank, &p).unwrap();
        let back = read_bank(&p).unwrap();
        assert_eq!(back.ids(), bank.ids());
        for (a, b) in back.vectors().data().iter().zip(bank.vectors().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.modality(), Modality::Voice);
    }

    #[test]
    fn short_row_reports_line() {
        let t = "FVBANK 1 2 4 face\na 1 2 3 4\nb 1 2 3\n";
        let e = EmbeddingBank::from_text("t", t).unwrap_err();
        assert!(matches!(
            e,
            Error::Parse { line: 3, kind: ParseErrorKind::FieldCount { expected: 5, found: 4 }, .. }
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let t = "FVBANK 1 2 1 face\na 1\na 2\n";
        let e = EmbeddingBank::from_text("t", t).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, kind: ParseErrorKind::Duplicate(_), .. }));
    }

    #[test]
    fn malformed_inputs() {
        let bad_header = EmbeddingBank::from_text("t", "FVBANK 2 1 1 face\na 1\n").unwrap_err();
        assert!(matches!(bad_header, Error::Parse { line: 1, kind: ParseErrorKind::Header(_), .. }));
        let nan = EmbeddingBank::from_text("t", "FVBANK 1 1 1 face\na NaN\n").unwrap_err();
        assert!(matches!(nan, Error::Parse { line: 2, kind: ParseErrorKind::NonFinite(_), .. }));
        let trailing = EmbeddingBank::from_text("t", "FVBANK 1 1 1 face\na 1\nb 2\n").unwrap_err();
        assert!(matches!(trailing, Error::Parse { line: 3, kind: ParseErrorKind::Trailing, .. }));
        let missing = EmbeddingBank::from_text("t", "FVBANK 1 2 1 face\na 1\n").unwrap_err();
        assert!(matches!(missing, Error::Parse { kind: ParseErrorKind::RowCount { .. }, .. }));
        let modality = EmbeddingBank::from_text("t", "FVBANK 1 1 1 lips\na 1\n").unwrap_err();
        assert!(matches!(modality, Error::Parse { kind: ParseErrorKind::Token(_), .. }));
    }
}
