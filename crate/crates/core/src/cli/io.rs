//! CSV ingestion, schema sidecars and deterministic file output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::binarize::{RawTable, RawValue, VariableKind};
use crate::error::{Error, Result};

/// A CSV file read verbatim, with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct CsvFile {
    pub header: Vec<String>,
    pub records: Vec<Vec<String>>,
    pub sha256: String,
}

impl CsvFile {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let sha256 = sha256_hex(&bytes);
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(Error::Data(format!("duplicate column `{dup}` in {}", path.display())));
        }
        let records = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { header, records, sha256 })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            variable: name.to_string(),
            reason: "is missing from the input".into(),
        })
    }

    /// Raw values of every column except `exclude`.
    pub fn table(&self, exclude: Option<usize>) -> Result<RawTable> {
        let keep: Vec<usize> = (0..self.header.len()).filter(|&c| Some(c) != exclude).collect();
        RawTable::new(
            keep.iter().map(|&c| self.header[c].clone()).collect(),
            self.records
                .iter()
                .map(|r| keep.iter().map(|&c| RawValue::parse(&r[c])).collect())
                .collect(),
        )
    }

    /// Splits off the label column, returning the remaining variables and the labels.
    pub fn with_labels(&self, label: &str) -> Result<(RawTable, Vec<bool>)> {
        let col = self.column_index(label)?;
        let labels = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                parse_label(&r[col]).ok_or_else(|| Error::Parse {
                    line: i + 2,
                    column: col + 1,
                    message: format!("label `{}` is not one of 0/1, true/false, yes/no, -1/+1", r[col]),
                })
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok((self.table(Some(col))?, labels))
    }
}

/// Positive class: `1`, `+1`, `true`, `yes`; negative: `0`, `-1`, `false`, `no`.
pub fn parse_label(field: &str) -> Option<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "+1" | "1.0" | "true" | "yes" => Some(true),
        "0" | "-1" | "0.0" | "-1.0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Schema sidecar: a TOML table `name = "continuous" | "categorical"`.
pub fn read_schema(path: &Path) -> Result<BTreeMap<String, VariableKind>> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        line: 0,
        column: 0,
        message: format!("schema {}: {}", path.display(), e.message()),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    crate::binarize::hex(&Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` and returns its SHA-256.
pub fn write_output(path: &Path, contents: &[u8]) -> Result<String> {
    std::fs::write(path, contents)?;
    Ok(sha256_hex(contents))
}

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x,y,c\n1.5,1,a\nNA,0,\n,yes,b\n").unwrap();
        let f = CsvFile::read(&p).unwrap();
        let (t, y) = f.with_labels("y").unwrap();
        assert_eq!(y, vec![true, false, true]);
        assert_eq!(t.names(), ["x".to_string(), "c".to_string()]);
        assert_eq!(t.rows()[1], vec![RawValue::Missing, RawValue::Missing]);
        assert_eq!(t.rows()[2][1], RawValue::Category("b".into()));
        assert!(matches!(f.with_labels("z"), Err(Error::Schema { .. })));
    }

    #[test]
    fn bad_label_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x,y\n1,1\n2,maybe\n").unwrap();
        match CsvFile::read(&p).unwrap().with_labels("y") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("{other:?}"),
        }
    }
}
