use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, SplitTag};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PEM1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// `.csv` files are CSV, anything else is treated as binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    match format {
        EmbeddingFormat::Binary => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_embeddings_binary(&bytes)
        }
        EmbeddingFormat::Csv => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_embeddings_csv(&text)
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn parse_embeddings_binary(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected PEM1".into()));
    }
    let n = r.u32("n")? as usize;
    let d = r.u32("d")? as usize;
    let k = r.u32("k")? as usize;
    let cells = n
        .checked_mul(d)
        .filter(|c| c.checked_mul(4).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| Error::Format(format!("header n={n}, d={d} exceeds file size")))?;
    let raw = r.take(cells * 4, "values")?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let labels = (0..n)
        .map(|_| r.u32("labels"))
        .collect::<Result<Vec<_>>>()?;
    let split = r
        .take(n, "split flags")?
        .iter()
        .map(|&f| match f {
            0 => Ok(SplitTag::Train),
            1 => Ok(SplitTag::Test),
            other => Err(Error::Format(format!("split flag {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut class_names = Vec::with_capacity(k.min(1 << 16));
    for _ in 0..k {
        let len = r.u32("class name length")? as usize;
        let name = r.take(len, "class name")?;
        let name = std::str::from_utf8(name)
            .map_err(|_| Error::Format("class name is not valid UTF-8".into()))?;
        class_names.push(name.to_string());
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after class names",
            bytes.len() - r.pos
        )));
    }
    EmbeddingMatrix::new(d, values, labels, class_names, split)
}

pub(super) fn encode_binary(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.values.len() * 4 + m.n * 5);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.n as u32).to_le_bytes());
    out.extend_from_slice(&(m.d as u32).to_le_bytes());
    out.extend_from_slice(&(m.k() as u32).to_le_bytes());
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in &m.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend(m.split.iter().map(|s| match s {
        SplitTag::Train => 0u8,
        SplitTag::Test => 1u8,
    }));
    for name in &m.class_names {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out
}

const CLASS_NAMES_PREFIX: &str = "# class_names:";

/// Parses the CSV layout. An optional first line `# class_names: a,b,c`
/// supplies class names; otherwise `k` is one past the largest label and
/// names default to `class_<i>`.
pub fn parse_embeddings_csv(text: &str) -> Result<EmbeddingMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let mut class_names: Option<Vec<String>> = None;
    if let Some((_, first)) = lines.peek() {
        if let Some(rest) = first.strip_prefix(CLASS_NAMES_PREFIX) {
            class_names = Some(rest.split(',').map(|s| s.trim().to_string()).collect());
            lines.next();
        }
    }
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 4 || cols[..3] != ["doc_index", "label", "split"] {
        return Err(Error::Format(
            "CSV header must start with doc_index,label,split and list f0..f{d-1}".into(),
        ));
    }
    let d = cols.len() - 3;
    for (i, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(Error::Format(format!(
                "header column {} should be f{i}, found {c:?}",
                i + 3
            )));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut split = Vec::new();
    for (row, (line_no, line)) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 3 {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, found {}",
                line_no + 1,
                d + 3,
                fields.len()
            )));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad doc_index", line_no + 1)))?;
        if idx != row {
            return Err(Error::Format(format!(
                "line {}: doc_index {idx} out of order, expected {row}",
                line_no + 1
            )));
        }
        labels.push(fields[1].parse::<u32>().map_err(|_| {
            Error::schema(format!("line {}: bad label {:?}", line_no + 1, fields[1]))
        })?);
        split.push(fields[2].parse::<SplitTag>()?);
        for (col, f) in fields[3..].iter().enumerate() {
            let v: f32 = f.parse().map_err(|_| Error::Value {
                row: Some(row),
                col: Some(col),
                msg: format!("unparseable number {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Value {
                    row: Some(row),
                    col: Some(col),
                    msg: format!("non-finite entry {f:?}"),
                });
            }
            values.push(v);
        }
    }
    let class_names = class_names.unwrap_or_else(|| {
        let k = labels.iter().max().map_or(1, |&m| m as usize + 1);
        (0..k).map(|i| format!("class_{i}")).collect()
    });
    EmbeddingMatrix::new(d, values, labels, class_names, split)
}

pub(super) fn encode_csv(m: &EmbeddingMatrix) -> String {
    let mut out = String::new();
    out.push_str(CLASS_NAMES_PREFIX);
    out.push(' ');
    out.push_str(&m.class_names.join(","));
    out.push('\n');
    out.push_str("doc_index,label,split");
    for i in 0..m.d {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for a in 0..m.n {
        out.push_str(&format!("{a},{},{}", m.labels[a], m.split[a].as_str()));
        for v in m.row(a) {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    out
}
