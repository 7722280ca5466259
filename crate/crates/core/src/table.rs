//! Columnar tables keyed by respondent sequence number.
//!
//! Every stage of the pipeline (XPORT parsing, harmonization, feature
//! assembly) speaks `ColumnTable`: named columns of typed cells with
//! explicit missingness.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// SAS-style numeric missing code: ".", ".A" .. ".Z", "._".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCode(pub char);

impl MissingCode {
    pub const DOT: MissingCode = MissingCode('.');

    pub fn from_marker_byte(b: u8) -> Option<MissingCode> {
        match b {
            0x2E => Some(MissingCode('.')),
            0x41..=0x5A => Some(MissingCode(b as char)),
            0x5F => Some(MissingCode('_')),
            _ => None,
        }
    }

    pub fn marker_byte(&self) -> u8 {
        match self.0 {
            '.' => 0x2E,
            '_' => 0x5F,
            c => c as u8,
        }
    }
}

impl fmt::Display for MissingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == '.' {
            write!(f, ".")
        } else {
            write!(f, ".{}", self.0)
        }
    }
}

impl std::str::FromStr for MissingCode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.as_bytes() {
            [b'.'] => Ok(MissingCode('.')),
            [b'.', c @ (b'A'..=b'Z' | b'_')] => Ok(MissingCode(*c as char)),
            _ => Err(()),
        }
    }
}

/// One cell of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellValue {
    Num(f64),
    Text(String),
    Missing(MissingCode),
}

impl CellValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            CellValue::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, CellValue::Missing(_))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("column {0:?} not found")]
    UnknownColumn(String),
    #[error("column {name:?} has length {got}, table has {want} rows")]
    LengthMismatch { name: String, got: usize, want: usize },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("key column {0:?} missing from table")]
    MissingKeyColumn(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Named columns of equal length plus an optional per-row provenance label
/// (the survey cycle a row came from).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTable {
    key_name: String,
    columns: IndexMap<String, Vec<CellValue>>,
    provenance: Option<Vec<String>>,
}

impl ColumnTable {
    pub fn new(key_name: impl Into<String>) -> Self {
        ColumnTable {
            key_name: key_name.into(),
            columns: IndexMap::new(),
            provenance: None,
        }
    }

    pub fn key_name(&self) -> &str {
        &self.key_name
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(|(_, c)| c.len()).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&[CellValue]> {
        self.columns.get(name).map(|c| c.as_slice())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn provenance(&self) -> Option<&[String]> {
        self.provenance.as_deref()
    }

    pub fn set_provenance(&mut self, prov: Vec<String>) -> Result<(), TableError> {
        if prov.len() != self.n_rows() {
            return Err(TableError::LengthMismatch {
                name: "<provenance>".into(),
                got: prov.len(),
                want: self.n_rows(),
            });
        }
        self.provenance = Some(prov);
        Ok(())
    }

    pub fn push_column(
        &mut self,
        name: impl Into<String>,
        values: Vec<CellValue>,
    ) -> Result<(), TableError> {
        let name = name.into();
        if self.columns.contains_key(&name) {
            return Err(TableError::DuplicateColumn(name));
        }
        if !self.columns.is_empty() && values.len() != self.n_rows() {
            return Err(TableError::LengthMismatch {
                name,
                got: values.len(),
                want: self.n_rows(),
            });
        }
        self.columns.insert(name, values);
        Ok(())
    }

    /// Numeric view of a column: `None` where missing or non-numeric text.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<Option<f64>>, TableError> {
        let col = self
            .column(name)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))?;
        Ok(col.iter().map(|c| c.as_num()).collect())
    }

    /// Canonical comparable form of a key cell (numeric keys compared by bit
    /// pattern so 1.0 == 1.0 regardless of provenance).
    pub fn key_repr(cell: &CellValue) -> String {
        match cell {
            CellValue::Num(v) => format!("n{}", v.to_bits()),
            CellValue::Text(s) => format!("t{s}"),
            CellValue::Missing(m) => format!("m{m}"),
        }
    }

    pub fn keys(&self) -> Result<&[CellValue], TableError> {
        self.column(&self.key_name)
            .ok_or_else(|| TableError::MissingKeyColumn(self.key_name.clone()))
    }

    /// Keep only rows where `mask[i]` is true. Provenance follows.
    pub fn filter_rows(&self, mask: &[bool]) -> ColumnTable {
        assert_eq!(mask.len(), self.n_rows());
        let mut out = ColumnTable::new(self.key_name.clone());
        for (name, col) in &self.columns {
            let vals = col
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v.clone())
                .collect();
            out.columns.insert(name.clone(), vals);
        }
        if let Some(prov) = &self.provenance {
            out.provenance = Some(
                prov.iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(p, _)| p.clone())
                    .collect(),
            );
        }
        out
    }

    /// Inner join on the key column. Errors if either side has a duplicate key.
    pub fn inner_join(&self, other: &ColumnTable) -> Result<ColumnTable, TableError> {
        let lk = self.keys()?;
        let rk = other.keys()?;
        let mut right_index: IndexMap<String, usize> = IndexMap::new();
        for (i, k) in rk.iter().enumerate() {
            let repr = Self::key_repr(k);
            if right_index.insert(repr, i).is_some() {
                return Err(TableError::DuplicateKey(format!("{k:?}")));
            }
        }
        let mut seen_left = HashSet::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (i, k) in lk.iter().enumerate() {
            let repr = Self::key_repr(k);
            if !seen_left.insert(repr.clone()) {
                return Err(TableError::DuplicateKey(format!("{k:?}")));
            }
            if let Some(&j) = right_index.get(&repr) {
                pairs.push((i, j));
            }
        }

        let mut out = ColumnTable::new(self.key_name.clone());
        for (name, col) in &self.columns {
            let vals = pairs.iter().map(|&(i, _)| col[i].clone()).collect();
            out.columns.insert(name.clone(), vals);
        }
        for (name, col) in &other.columns {
            if name == other.key_name() || out.columns.contains_key(name) {
                continue;
            }
            let vals = pairs.iter().map(|&(_, j)| col[j].clone()).collect();
            out.columns.insert(name.clone(), vals);
        }
        if let Some(prov) = &self.provenance {
            out.provenance = Some(pairs.iter().map(|&(i, _)| prov[i].clone()).collect());
        }
        Ok(out)
    }
}

/// Per-column type information stored in the JSON sidecar next to a view CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Character,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewSchema {
    pub key: String,
    pub columns: Vec<ColumnSchema>,
    pub keep_missing_codes: bool,
    pub has_provenance: bool,
}

fn column_kind(col: &[CellValue]) -> ColumnKind {
    if col.iter().any(|c| matches!(c, CellValue::Text(_))) {
        ColumnKind::Character
    } else {
        ColumnKind::Numeric
    }
}

impl ColumnTable {
    /// Write the table as RFC-4180 CSV. Missing values render as empty
    /// fields; with `keep_missing_codes` each column gets a sidecar
    /// `<name>__missing` column preserving the code.
    pub fn write_csv<W: Write>(&self, w: W, keep_missing_codes: bool) -> Result<(), TableError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = Vec::new();
        for name in self.columns.keys() {
            header.push(name.clone());
            if keep_missing_codes {
                header.push(format!("{name}__missing"));
            }
        }
        if self.provenance.is_some() {
            header.push("__cycle".into());
        }
        wtr.write_record(&header).map_err(io_err)?;
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = Vec::new();
            for col in self.columns.values() {
                let (val, code) = match &col[row] {
                    CellValue::Num(v) => (format_num(*v), String::new()),
                    CellValue::Text(s) => (s.clone(), String::new()),
                    CellValue::Missing(m) => (String::new(), m.to_string()),
                };
                rec.push(val);
                if keep_missing_codes {
                    rec.push(code);
                }
            }
            if let Some(prov) = &self.provenance {
                rec.push(prov[row].clone());
            }
            wtr.write_record(&rec).map_err(io_err)?;
        }
        wtr.flush().map_err(|e| TableError::Io(e.to_string()))?;
        Ok(())
    }

    /// Persist as `<stem>.csv` plus `<stem>.schema.json`.
    pub fn write_view(&self, stem: &Path, keep_missing_codes: bool) -> Result<(), TableError> {
        let csv_path = stem.with_extension("csv");
        let schema_path = stem.with_extension("schema.json");
        let file = std::fs::File::create(&csv_path).map_err(|e| TableError::Io(e.to_string()))?;
        self.write_csv(file, keep_missing_codes)?;
        let schema = ViewSchema {
            key: self.key_name.clone(),
            columns: self
                .columns
                .iter()
                .map(|(name, col)| ColumnSchema {
                    name: name.clone(),
                    kind: column_kind(col),
                })
                .collect(),
            keep_missing_codes,
            has_provenance: self.provenance.is_some(),
        };
        let json = serde_json::to_string_pretty(&schema).expect("schema serializes");
        std::fs::write(&schema_path, json).map_err(|e| TableError::Io(e.to_string()))?;
        Ok(())
    }

    /// Load a view written by [`write_view`].
    pub fn read_view(stem: &Path) -> Result<ColumnTable, TableError> {
        let csv_path = stem.with_extension("csv");
        let schema_path = stem.with_extension("schema.json");
        let schema: ViewSchema = serde_json::from_str(
            &std::fs::read_to_string(&schema_path).map_err(|e| TableError::Io(e.to_string()))?,
        )
        .map_err(|e| TableError::Io(e.to_string()))?;
        let mut rdr = csv::Reader::from_path(&csv_path).map_err(io_err)?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(io_err)?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut cols: Vec<Vec<CellValue>> = vec![Vec::new(); schema.columns.len()];
        let mut prov: Vec<String> = Vec::new();
        let col_pos: Vec<usize> = schema
            .columns
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| *h == c.name)
                    .ok_or_else(|| TableError::UnknownColumn(c.name.clone()))
            })
            .collect::<Result<_, _>>()?;
        let miss_pos: Vec<Option<usize>> = schema
            .columns
            .iter()
            .map(|c| header.iter().position(|h| *h == format!("{}__missing", c.name)))
            .collect();
        let prov_pos = header.iter().position(|h| h == "__cycle");
        for record in rdr.records() {
            let record = record.map_err(io_err)?;
            for (ci, schema_col) in schema.columns.iter().enumerate() {
                let raw = record.get(col_pos[ci]).unwrap_or("");
                let cell = if raw.is_empty() {
                    let code = miss_pos[ci]
                        .and_then(|p| record.get(p))
                        .and_then(|s| s.parse::<MissingCode>().ok())
                        .unwrap_or(MissingCode::DOT);
                    CellValue::Missing(code)
                } else {
                    match schema_col.kind {
                        ColumnKind::Numeric => CellValue::Num(raw.parse::<f64>().map_err(|e| {
                            TableError::Io(format!("bad numeric {raw:?} in {}: {e}", schema_col.name))
                        })?),
                        ColumnKind::Character => CellValue::Text(raw.to_string()),
                    }
                };
                cols[ci].push(cell);
            }
            if let Some(p) = prov_pos {
                prov.push(record.get(p).unwrap_or("").to_string());
            }
        }
        let mut table = ColumnTable::new(schema.key.clone());
        for (schema_col, col) in schema.columns.iter().zip(cols) {
            table.push_column(schema_col.name.clone(), col)?;
        }
        if schema.has_provenance && prov_pos.is_some() {
            table.set_provenance(prov)?;
        }
        Ok(table)
    }
}

fn format_num(v: f64) -> String {
    // Display for f64 is the shortest string that round-trips
    v.to_string()
}

fn io_err(e: csv::Error) -> TableError {
    TableError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(v: f64) -> CellValue {
        CellValue::Num(v)
    }

    fn table_with_keys(keys: &[f64]) -> ColumnTable {
        let mut t = ColumnTable::new("SEQN");
        t.push_column("SEQN", keys.iter().map(|&k| num(k)).collect()).unwrap();
        t
    }

    #[test]
    fn join_is_key_intersection() {
        let mut left = table_with_keys(&[1.0, 2.0, 3.0]);
        left.push_column("A", vec![num(10.0), num(20.0), num(30.0)]).unwrap();
        let mut right = table_with_keys(&[2.0, 3.0, 4.0]);
        right.push_column("B", vec![num(200.0), num(300.0), num(400.0)]).unwrap();
        let joined = left.inner_join(&right).unwrap();
        assert_eq!(joined.n_rows(), 2);
        assert_eq!(joined.column("A").unwrap(), &[num(20.0), num(30.0)]);
        assert_eq!(joined.column("B").unwrap(), &[num(200.0), num(300.0)]);
    }

    #[test]
    fn join_disjoint_keys_keeps_schema() {
        let left = table_with_keys(&[1.0]);
        let mut right = table_with_keys(&[9.0]);
        right.push_column("B", vec![num(1.0)]).unwrap();
        let joined = left.inner_join(&right).unwrap();
        assert_eq!(joined.n_rows(), 0);
        let names: Vec<&str> = joined.column_names().collect();
        assert_eq!(names, vec!["SEQN", "B"]);
    }

    #[test]
    fn join_duplicate_key_rejected() {
        let left = table_with_keys(&[1.0, 1.0]);
        let right = table_with_keys(&[1.0]);
        assert!(matches!(left.inner_join(&right), Err(TableError::DuplicateKey(_))));
    }

    #[test]
    fn missing_code_display_roundtrip() {
        for code in [MissingCode('.'), MissingCode('A'), MissingCode('Z'), MissingCode('_')] {
            let s = code.to_string();
            assert_eq!(s.parse::<MissingCode>().unwrap(), code);
        }
    }

    #[test]
    fn view_roundtrip_preserves_missing_codes() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = table_with_keys(&[1.0, 2.0, 3.0]);
        t.push_column(
            "LBXGLU",
            vec![num(99.5), CellValue::Missing(MissingCode('A')), CellValue::Missing(MissingCode::DOT)],
        )
        .unwrap();
        t.push_column(
            "NAME",
            vec![
                CellValue::Text("a,b".into()),
                CellValue::Text("\"q\"".into()),
                CellValue::Text(String::new()),
            ],
        )
        .unwrap();
        t.set_provenance(vec!["1999-2000".into(), "1999-2000".into(), "2001-2002".into()])
            .unwrap();
        let stem = dir.path().join("view");
        t.write_view(&stem, true).unwrap();
        let back = ColumnTable::read_view(&stem).unwrap();
        assert_eq!(back.column("LBXGLU").unwrap(), t.column("LBXGLU").unwrap());
        assert_eq!(back.n_rows(), 3);
        assert_eq!(back.provenance().unwrap()[2], "2001-2002");
        // empty text round-trips as missing; documented lossy corner of the CSV form
        assert!(back.column("NAME").unwrap()[2].is_missing());
    }
}
