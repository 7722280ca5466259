//! SAS XPORT (version 5) transport file parser.
//!
//! NHANES publishes every component file in this format: a sequence of
//! 80-byte records, NAMESTR variable descriptors, and observation payloads
//! whose numeric cells are IBM System/360 base-16 floats.

use thiserror::Error;

use crate::table::{CellValue, ColumnTable, MissingCode};

pub const RECORD_LEN: usize = 80;

const LIBRARY_SENTINEL: &[u8] = b"HEADER RECORD*******LIBRARY HEADER RECORD!!!!!!!";
const MEMBER_SENTINEL: &[u8] = b"HEADER RECORD*******MEMBER  HEADER RECORD!!!!!!!";
const DSCRPTR_SENTINEL: &[u8] = b"HEADER RECORD*******DSCRPTR HEADER RECORD!!!!!!!";
const NAMESTR_SENTINEL: &[u8] = b"HEADER RECORD*******NAMESTR HEADER RECORD!!!!!!!";
const OBS_SENTINEL: &[u8] = b"HEADER RECORD*******OBS     HEADER RECORD!!!!!!!";

#[derive(Debug, Error)]
pub enum XportError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("NAMESTR count disagrees with descriptor region: {0}")]
    BadNamestrCount(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    Numeric,
    Character,
}

#[derive(Debug, Clone)]
pub struct VariableDescriptor {
    pub name: String,
    pub label: String,
    pub kind: VariableKind,
    /// field width in bytes (numeric 2..=8, character 1..=200)
    pub length: usize,
    /// byte offset within one observation record
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct XportMember {
    pub name: String,
    pub variables: Vec<VariableDescriptor>,
    pub observation_count: usize,
    /// byte offset of the observation payload within the source stream
    data_offset: usize,
    /// payload length including trailing 80-byte alignment padding
    data_len: usize,
}

impl XportMember {
    pub fn record_stride(&self) -> usize {
        self.variables.iter().map(|v| v.length).sum()
    }
}

#[derive(Debug, Clone)]
pub struct XportLibrary {
    /// creation timestamp as written in the header (ddMMMyy:hh:mm:ss)
    pub created: String,
    pub members: Vec<XportMember>,
}

/// Decode one 8-byte big-endian IBM System/360 hexadecimal float.
///
/// Every 8-byte pattern maps to a value or a missing code: a marker byte
/// (`.`, `A`..`Z`, `_`) followed by seven zero bytes is a SAS missing
/// value; anything else decodes as
/// `(-1)^sign * 16^(exp-64) * mantissa / 16^14`.
pub fn decode_ibm_double(bytes: [u8; 8]) -> CellValue {
    if bytes == [0u8; 8] {
        return CellValue::Num(0.0);
    }
    if bytes[1..].iter().all(|&b| b == 0) {
        if let Some(code) = MissingCode::from_marker_byte(bytes[0]) {
            return CellValue::Missing(code);
        }
    }
    let sign = if bytes[0] & 0x80 != 0 { -1.0 } else { 1.0 };
    let exponent = (bytes[0] & 0x7F) as i32;
    let mut mantissa: u64 = 0;
    for &b in &bytes[1..] {
        mantissa = (mantissa << 8) | b as u64;
    }
    // u64 -> f64 conversion rounds to nearest, ties to even; the scale
    // factor is an exact power of two so the product is correctly rounded.
    let value = mantissa as f64 * 2f64.powi(4 * (exponent - 64) - 56);
    CellValue::Num(sign * value)
}

/// Zero-extend a short numeric field to 8 bytes, then decode.
pub fn decode_numeric_field(field: &[u8]) -> CellValue {
    let mut buf = [0u8; 8];
    buf[..field.len().min(8)].copy_from_slice(&field[..field.len().min(8)]);
    decode_ibm_double(buf)
}

struct Records<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Records<'a> {
    fn next(&mut self, what: &str) -> Result<&'a [u8], XportError> {
        if self.pos + RECORD_LEN > self.data.len() {
            return Err(XportError::TruncatedFile(format!(
                "stream ends before {what} (offset {})",
                self.pos
            )));
        }
        let rec = &self.data[self.pos..self.pos + RECORD_LEN];
        self.pos += RECORD_LEN;
        Ok(rec)
    }

    fn peek_is(&self, sentinel: &[u8]) -> bool {
        self.pos + RECORD_LEN <= self.data.len() && self.data[self.pos..].starts_with(sentinel)
    }
}

fn ascii_trim(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim().to_string()
}

fn be_u16(bytes: &[u8]) -> u16 {
    u16::from_be_bytes([bytes[0], bytes[1]])
}

fn be_u32(bytes: &[u8]) -> u32 {
    u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
}

/// Parse the full library structure (headers and NAMESTR descriptors) from
/// an in-memory XPORT stream. Observation payloads are located but not
/// decoded; use [`read_observations`] for that.
pub fn parse_library(data: &[u8]) -> Result<XportLibrary, XportError> {
    let mut records = Records { data, pos: 0 };
    let first = records.next("library header")?;
    if !first.starts_with(LIBRARY_SENTINEL) {
        return Err(XportError::MalformedHeader(
            "missing LIBRARY HEADER RECORD sentinel".into(),
        ));
    }
    let real1 = records.next("first real header")?;
    if !real1.starts_with(b"SAS     SAS     SASLIB") {
        return Err(XportError::MalformedHeader("missing SASLIB header".into()));
    }
    let created = ascii_trim(&real1[64..80]);
    records.next("second real header")?;

    let mut members = Vec::new();
    while records.peek_is(MEMBER_SENTINEL) {
        members.push(parse_member(&mut records)?);
    }
    if records.pos < data.len() {
        // leftover bytes that are not a member header
        let tail = &data[records.pos..];
        if !tail.iter().all(|&b| b == b' ') {
            return Err(XportError::MalformedHeader(format!(
                "unexpected record at offset {}",
                records.pos
            )));
        }
    }
    Ok(XportLibrary { created, members })
}

fn parse_member(records: &mut Records<'_>) -> Result<XportMember, XportError> {
    let member_hdr = records.next("member header")?;
    debug_assert!(member_hdr.starts_with(MEMBER_SENTINEL));
    let tail = ascii_trim(&member_hdr[48..]);
    let namestr_size: usize = tail
        .get(tail.len().saturating_sub(3)..)
        .and_then(|s| s.parse().ok())
        .filter(|&n| n == 136 || n == 140)
        .ok_or_else(|| {
            XportError::MalformedHeader(format!("bad NAMESTR record size in member header: {tail:?}"))
        })?;

    let dscrptr = records.next("DSCRPTR header")?;
    if !dscrptr.starts_with(DSCRPTR_SENTINEL) {
        return Err(XportError::MalformedHeader("missing DSCRPTR header".into()));
    }
    let desc1 = records.next("member descriptor")?;
    if !desc1.starts_with(b"SAS     ") {
        return Err(XportError::MalformedHeader("missing member descriptor".into()));
    }
    let name = ascii_trim(&desc1[8..16]);
    if name.is_empty()
        || name.len() > 8
        || !name
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
    {
        return Err(XportError::MalformedHeader(format!(
            "invalid member name {name:?}"
        )));
    }
    records.next("member descriptor 2")?;

    let namestr_hdr = records.next("NAMESTR header")?;
    if !namestr_hdr.starts_with(NAMESTR_SENTINEL) {
        return Err(XportError::MalformedHeader("missing NAMESTR header".into()));
    }
    let var_count: usize = ascii_trim(&namestr_hdr[48..58]).parse().map_err(|_| {
        XportError::MalformedHeader("unreadable variable count in NAMESTR header".into())
    })?;

    let region = var_count * namestr_size;
    let region_padded = region.div_ceil(RECORD_LEN) * RECORD_LEN;
    if records.pos + region_padded > records.data.len() {
        return Err(XportError::TruncatedFile("NAMESTR region".into()));
    }
    let namestr_bytes = &records.data[records.pos..records.pos + region_padded];
    records.pos += region_padded;

    let mut variables = Vec::with_capacity(var_count);
    for i in 0..var_count {
        let ns = &namestr_bytes[i * namestr_size..(i + 1) * namestr_size];
        variables.push(parse_namestr(ns)?);
    }
    validate_layout(&variables)?;

    // declared count must leave the OBS header exactly at the next record
    let obs_hdr = records.next("OBS header")?;
    if !obs_hdr.starts_with(OBS_SENTINEL) {
        return Err(XportError::BadNamestrCount(format!(
            "expected OBS header after {var_count} NAMESTR entries"
        )));
    }

    let data_offset = records.pos;
    let mut end = records.data.len();
    // a following member begins at the next MEMBER sentinel, 80-byte aligned
    let mut scan = records.pos;
    while scan + RECORD_LEN <= records.data.len() {
        if records.data[scan..].starts_with(MEMBER_SENTINEL) {
            end = scan;
            break;
        }
        scan += RECORD_LEN;
    }
    let data_len = end - data_offset;
    if data_len % RECORD_LEN != 0 {
        return Err(XportError::TruncatedFile(format!(
            "observation region of member {name} is {data_len} bytes, not 80-byte aligned"
        )));
    }
    records.pos = end;

    let stride: usize = variables.iter().map(|v| v.length).sum();
    let observation_count = count_observations(&records.data[data_offset..end], stride);

    Ok(XportMember {
        name,
        variables,
        observation_count,
        data_offset,
        data_len,
    })
}

/// Number of real observations in the payload: full strides, minus trailing
/// all-blank rows that only exist to pad the final 80-byte record.
fn count_observations(payload: &[u8], stride: usize) -> usize {
    if stride == 0 {
        return 0;
    }
    let mut n = payload.len() / stride;
    while n > 0 {
        let row = &payload[(n - 1) * stride..n * stride];
        let tail_after = payload.len() - (n - 1) * stride;
        if tail_after < RECORD_LEN && row.iter().all(|&b| b == b' ') {
            n -= 1;
        } else {
            break;
        }
    }
    n
}

fn parse_namestr(ns: &[u8]) -> Result<VariableDescriptor, XportError> {
    let ntype = be_u16(&ns[0..2]);
    let kind = match ntype {
        1 => VariableKind::Numeric,
        2 => VariableKind::Character,
        other => {
            return Err(XportError::MalformedHeader(format!(
                "NAMESTR ntype {other} is neither numeric(1) nor character(2)"
            )))
        }
    };
    let length = be_u16(&ns[4..6]) as usize;
    let name = ascii_trim(&ns[8..16]);
    let label = ascii_trim(&ns[16..56]);
    let position = be_u32(&ns[84..88]) as usize;
    match kind {
        VariableKind::Numeric if !(2..=8).contains(&length) => {
            return Err(XportError::MalformedHeader(format!(
                "numeric variable {name} has length {length}, expected 2..=8"
            )))
        }
        VariableKind::Character if !(1..=200).contains(&length) => {
            return Err(XportError::MalformedHeader(format!(
                "character variable {name} has length {length}, expected 1..=200"
            )))
        }
        _ => {}
    }
    Ok(VariableDescriptor {
        name,
        label,
        kind,
        length,
        position,
    })
}

fn validate_layout(vars: &[VariableDescriptor]) -> Result<(), XportError> {
    let mut next = 0usize;
    for v in vars {
        if v.position < next {
            return Err(XportError::MalformedHeader(format!(
                "variable {} at position {} overlaps the previous field (expected ≥ {next})",
                v.name, v.position
            )));
        }
        next = v.position + v.length;
    }
    Ok(())
}

/// Decode the observation payload of a parsed member into a table.
///
/// Numeric columns go through [`decode_ibm_double`]; character columns are
/// right-trimmed.
pub fn read_observations(member: &XportMember, data: &[u8]) -> Result<ColumnTable, XportError> {
    let stride = member.record_stride();
    let needed = member.data_offset + member.observation_count * stride;
    if needed > data.len() || member.data_offset + member.data_len > data.len() {
        return Err(XportError::TruncatedFile(format!(
            "member {} needs {needed} bytes, stream has {}",
            member.name,
            data.len()
        )));
    }
    let payload = &data[member.data_offset..member.data_offset + member.data_len];

    let key = member
        .variables
        .iter()
        .find(|v| v.name == "SEQN")
        .map(|v| v.name.clone())
        .unwrap_or_else(|| member.variables.first().map(|v| v.name.clone()).unwrap_or_default());
    let mut columns: Vec<Vec<CellValue>> = member
        .variables
        .iter()
        .map(|_| Vec::with_capacity(member.observation_count))
        .collect();
    for row in 0..member.observation_count {
        let rec = &payload[row * stride..(row + 1) * stride];
        for (vi, var) in member.variables.iter().enumerate() {
            let field = &rec[var.position..var.position + var.length];
            let cell = match var.kind {
                VariableKind::Numeric => decode_numeric_field(field),
                VariableKind::Character => {
                    CellValue::Text(String::from_utf8_lossy(field).trim_end().to_string())
                }
            };
            columns[vi].push(cell);
        }
    }
    let mut table = ColumnTable::new(key);
    for (var, col) in member.variables.iter().zip(columns) {
        table
            .push_column(var.name.clone(), col)
            .map_err(|e| XportError::MalformedHeader(format!("duplicate variable: {e}")))?;
    }
    Ok(table)
}

/// Parse a whole `.XPT` file from disk into (member name, table) pairs.
pub fn read_file(path: &std::path::Path) -> Result<Vec<(String, ColumnTable)>, XportError> {
    let data = std::fs::read(path)
        .map_err(|e| XportError::TruncatedFile(format!("cannot read {}: {e}", path.display())))?;
    let lib = parse_library(&data)?;
    lib.members
        .iter()
        .map(|m| Ok((m.name.clone(), read_observations(m, &data)?)))
        .collect()
}
