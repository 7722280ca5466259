//! Test-only XPORT v5 writer used to build fixtures for the parser tests.
//! Deliberately independent of the parser: records are assembled straight
//! from the transport-format layout so round-trips check both directions.
#![allow(dead_code)] // each test binary uses a different subset

use nhanes_views::table::{CellValue, ColumnTable};

pub const RECORD_LEN: usize = 80;

/// Encode an IEEE double as an 8-byte big-endian IBM System/360 float.
///
/// Normalized so the leading hex digit of the 14-digit mantissa is nonzero;
/// every finite double with magnitude inside the IBM exponent range and a
/// 53-bit significand encodes exactly.
pub fn encode_ibm_double(v: f64) -> [u8; 8] {
    if v == 0.0 {
        return [0u8; 8];
    }
    assert!(v.is_finite(), "IBM format has no non-finite values");
    let sign = if v < 0.0 { 0x80u8 } else { 0 };
    let mut a = v.abs();
    let mut exp: i32 = 64;
    while a >= 1.0 {
        a /= 16.0;
        exp += 1;
    }
    while a < 1.0 / 16.0 {
        a *= 16.0;
        exp -= 1;
    }
    let mut mantissa = (a * 16f64.powi(14)).round() as u64;
    if mantissa >= 1 << 56 {
        mantissa >>= 4;
        exp += 1;
    }
    assert!((1..=127).contains(&exp), "magnitude out of IBM range: {v}");
    let mut out = [0u8; 8];
    out[0] = sign | exp as u8;
    out[1..].copy_from_slice(&mantissa.to_be_bytes()[1..]);
    out
}

pub fn encode_cell(cell: &CellValue) -> [u8; 8] {
    match cell {
        CellValue::Num(v) => encode_ibm_double(*v),
        CellValue::Missing(m) => {
            let mut out = [0u8; 8];
            out[0] = m.marker_byte();
            out
        }
        CellValue::Text(_) => panic!("numeric encoder got text"),
    }
}

fn record(content: &[u8]) -> Vec<u8> {
    assert!(content.len() <= RECORD_LEN);
    let mut rec = content.to_vec();
    rec.resize(RECORD_LEN, b' ');
    rec
}

fn pad_to_record(buf: &mut Vec<u8>, fill: u8) {
    while buf.len() % RECORD_LEN != 0 {
        buf.push(fill);
    }
}

fn write_field(buf: &mut [u8], offset: usize, text: &str) {
    buf[offset..offset + text.len()].copy_from_slice(text.as_bytes());
}

/// One variable for the writer: name plus column kind/width.
pub struct WriterVar {
    pub name: String,
    pub label: String,
    /// None = numeric (8 bytes); Some(w) = character of width w
    pub char_width: Option<usize>,
}

impl WriterVar {
    pub fn numeric(name: &str) -> WriterVar {
        WriterVar {
            name: name.to_string(),
            label: format!("{name} label"),
            char_width: None,
        }
    }

    pub fn character(name: &str, width: usize) -> WriterVar {
        WriterVar {
            name: name.to_string(),
            label: String::new(),
            char_width: Some(width),
        }
    }

    fn length(&self) -> usize {
        self.char_width.unwrap_or(8)
    }
}

fn namestr(var: &WriterVar, index: usize, position: usize) -> [u8; 140] {
    let mut ns = [0u8; 140];
    let ntype: u16 = if var.char_width.is_some() { 2 } else { 1 };
    ns[0..2].copy_from_slice(&ntype.to_be_bytes());
    ns[4..6].copy_from_slice(&(var.length() as u16).to_be_bytes());
    ns[6..8].copy_from_slice(&(index as u16).to_be_bytes());
    let mut name = var.name.clone();
    name.truncate(8);
    let padded = format!("{name:<8}");
    ns[8..16].copy_from_slice(padded.as_bytes());
    let mut label = var.label.clone();
    label.truncate(40);
    let padded = format!("{label:<40}");
    ns[16..56].copy_from_slice(padded.as_bytes());
    ns[84..88].copy_from_slice(&(position as u32).to_be_bytes());
    ns
}

pub struct WriterMember {
    pub name: String,
    pub vars: Vec<WriterVar>,
    /// rows of cells, one per var
    pub rows: Vec<Vec<CellValue>>,
}

/// Serialize a library of members into XPORT v5 bytes.
pub fn write_library(created: &str, members: &[WriterMember]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(record(
        b"HEADER RECORD*******LIBRARY HEADER RECORD!!!!!!!000000000000000000000000000000",
    ));
    let mut real1 = record(b"SAS     SAS     SASLIB  9.4     X64_DSRV");
    write_field(&mut real1, 64, created);
    out.extend(real1);
    out.extend(record(created.as_bytes()));

    for member in members {
        let mut hdr = record(b"HEADER RECORD*******MEMBER  HEADER RECORD!!!!!!!");
        write_field(&mut hdr, 48, "00000000000000000160000000");
        write_field(&mut hdr, 74, "000140");
        out.extend(hdr);
        out.extend(record(
            b"HEADER RECORD*******DSCRPTR HEADER RECORD!!!!!!!000000000000000000000000000000",
        ));
        let mut desc = record(b"SAS     ");
        write_field(&mut desc, 8, &format!("{:<8}", member.name));
        write_field(&mut desc, 16, "SASDATA 9.4     X64_DSRV");
        write_field(&mut desc, 64, created);
        out.extend(desc);
        out.extend(record(created.as_bytes()));

        let mut ns_hdr = record(b"HEADER RECORD*******NAMESTR HEADER RECORD!!!!!!!");
        write_field(&mut ns_hdr, 48, &format!("{:010}", member.vars.len()));
        out.extend(ns_hdr);
        let mut position = 0usize;
        for (i, var) in member.vars.iter().enumerate() {
            out.extend(namestr(var, i + 1, position));
            position += var.length();
        }
        pad_to_record(&mut out, b' ');

        out.extend(record(
            b"HEADER RECORD*******OBS     HEADER RECORD!!!!!!!000000000000000000000000000000",
        ));
        for row in &member.rows {
            assert_eq!(row.len(), member.vars.len());
            for (var, cell) in member.vars.iter().zip(row) {
                match var.char_width {
                    None => out.extend(encode_cell(cell)),
                    Some(w) => {
                        let text = match cell {
                            CellValue::Text(s) => s.clone(),
                            other => panic!("character encoder got {other:?}"),
                        };
                        assert!(text.len() <= w);
                        out.extend(format!("{text:<w$}").as_bytes());
                    }
                }
            }
        }
        pad_to_record(&mut out, b' ');
    }
    out
}

/// Convenience: an all-numeric member from a table's columns.
pub fn member_from_table(name: &str, table: &ColumnTable) -> WriterMember {
    let vars: Vec<WriterVar> = table.column_names().map(WriterVar::numeric).collect();
    let rows: Vec<Vec<CellValue>> = (0..table.n_rows())
        .map(|i| {
            table
                .column_names()
                .map(|c| table.column(c).unwrap()[i].clone())
                .collect()
        })
        .collect();
    WriterMember {
        name: name.to_string(),
        vars,
        rows,
    }
}
