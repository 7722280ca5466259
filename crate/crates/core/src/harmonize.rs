//! Cross-cycle harmonization: declarative rename/recode/eligibility rules
//! turn per-cycle raw tables into one stacked, per-category view, plus the
//! joins, filters and summaries the analysis needs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{CellValue, ColumnTable, MissingCode, TableError};

#[derive(Debug, Error)]
pub enum HarmonizeError {
    #[error("two rules target the canonical name {0:?}")]
    RuleConflict(String),
    #[error("strict mode: value {value} of {variable} in cycle {cycle} has no recode mapping")]
    RecodeDomainError {
        variable: String,
        cycle: String,
        value: f64,
    },
    #[error("column {0:?} not found")]
    UnknownColumn(String),
    #[error("bin width must be positive, got {0}")]
    NonPositiveBinWidth(f64),
    #[error("column {0:?} is not numeric")]
    NotNumeric(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Map a set of raw per-cycle codes to canonical codes within listed cycles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recode {
    /// cycle labels ("1999-2000", ...) this map applies to
    pub cycles: Vec<String>,
    /// old value -> new value (keys serialized as strings for JSON)
    pub map: BTreeMap<String, f64>,
}

/// Numeric range predicate over another canonical variable; rows failing it
/// get missing for the rule's target (never row deletion).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eligibility {
    pub variable: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonizationRule {
    /// canonical output name
    pub target: String,
    /// cycle label -> source variable name in that cycle's raw table
    pub sources: BTreeMap<String, String>,
    #[serde(default)]
    pub recodes: Vec<Recode>,
    /// values meaning refused / don't know; become missing
    #[serde(default)]
    pub drop_codes: Vec<f64>,
    #[serde(default)]
    pub eligibility: Option<Eligibility>,
}

/// Warnings accumulated during lenient rule application.
#[derive(Debug, Default, Clone, Serialize)]
pub struct ApplyReport {
    pub unmapped_values: usize,
    pub absent_sources: Vec<String>,
}

/// Stack all cycles into one table with one column per rule target.
///
/// Values are recoded per rule, drop codes become missing, and rows failing
/// a rule's eligibility get missing for that target only. Row count is
/// always the sum of the input tables' row counts.
pub fn apply_rules(
    raw: &BTreeMap<String, ColumnTable>,
    rules: &[HarmonizationRule],
    strict: bool,
) -> Result<(ColumnTable, ApplyReport), HarmonizeError> {
    let mut seen = std::collections::HashSet::new();
    for rule in rules {
        if !seen.insert(&rule.target) {
            return Err(HarmonizeError::RuleConflict(rule.target.clone()));
        }
    }
    let mut report = ApplyReport::default();

    let key_name = raw
        .values()
        .next()
        .map(|t| t.key_name().to_string())
        .unwrap_or_else(|| "SEQN".to_string());
    let total_rows: usize = raw.values().map(|t| t.n_rows()).sum();

    let mut keys: Vec<CellValue> = Vec::with_capacity(total_rows);
    let mut provenance: Vec<String> = Vec::with_capacity(total_rows);
    for (cycle, table) in raw {
        keys.extend(table.keys()?.iter().cloned());
        provenance.extend(std::iter::repeat(cycle.clone()).take(table.n_rows()));
    }

    let mut out = ColumnTable::new(key_name);
    out.push_column(
        raw.values()
            .next()
            .map(|t| t.key_name().to_string())
            .unwrap_or_else(|| "SEQN".to_string()),
        keys,
    )?;

    for rule in rules {
        let mut col: Vec<CellValue> = Vec::with_capacity(total_rows);
        for (cycle, table) in raw {
            let source = rule.sources.get(cycle);
            let src_col = source.and_then(|name| table.column(name));
            if let Some(name) = source {
                if src_col.is_none() {
                    report.absent_sources.push(format!("{}:{name}", cycle));
                }
            }
            let recode = rule
                .recodes
                .iter()
                .find(|r| r.cycles.iter().any(|c| c == cycle));
            match src_col {
                None => col.extend(
                    std::iter::repeat(CellValue::Missing(MissingCode::DOT)).take(table.n_rows()),
                ),
                Some(values) => {
                    for cell in values {
                        col.push(recode_cell(cell, rule, recode, cycle, strict, &mut report)?);
                    }
                }
            }
        }
        out.push_column(rule.target.clone(), col)?;
    }
    out.set_provenance(provenance)?;

    // eligibility pass over canonical columns
    for rule in rules {
        let Some(elig) = &rule.eligibility else {
            continue;
        };
        let probe = out
            .numeric_column(&elig.variable)
            .map_err(|_| HarmonizeError::UnknownColumn(elig.variable.clone()))?;
        let target = out.column(&rule.target).expect("just inserted").to_vec();
        let new_col: Vec<CellValue> = target
            .into_iter()
            .zip(&probe)
            .map(|(cell, v)| {
                let pass = v
                    .map(|v| {
                        elig.min.map_or(true, |m| v >= m) && elig.max.map_or(true, |m| v <= m)
                    })
                    .unwrap_or(false);
                if pass {
                    cell
                } else {
                    CellValue::Missing(MissingCode::DOT)
                }
            })
            .collect();
        replace_column(&mut out, &rule.target, new_col);
    }

    Ok((out, report))
}

fn replace_column(table: &mut ColumnTable, name: &str, values: Vec<CellValue>) {
    // rebuild preserving order; ColumnTable has no in-place mutation on purpose
    let mut rebuilt = ColumnTable::new(table.key_name().to_string());
    let names: Vec<String> = table.column_names().map(|s| s.to_string()).collect();
    for n in names {
        let col = if n == name {
            values.clone()
        } else {
            table.column(&n).unwrap().to_vec()
        };
        rebuilt.push_column(n, col).expect("same schema");
    }
    if let Some(p) = table.provenance() {
        rebuilt.set_provenance(p.to_vec()).expect("same length");
    }
    *table = rebuilt;
}

fn recode_cell(
    cell: &CellValue,
    rule: &HarmonizationRule,
    recode: Option<&Recode>,
    cycle: &str,
    strict: bool,
    report: &mut ApplyReport,
) -> Result<CellValue, HarmonizeError> {
    let CellValue::Num(v) = cell else {
        return Ok(cell.clone());
    };
    if rule.drop_codes.contains(v) {
        return Ok(CellValue::Missing(MissingCode::DOT));
    }
    let Some(recode) = recode else {
        return Ok(cell.clone());
    };
    match recode.map.iter().find(|(k, _)| k.parse::<f64>() == Ok(*v)) {
        Some((_, &new)) => Ok(CellValue::Num(new)),
        None if strict => Err(HarmonizeError::RecodeDomainError {
            variable: rule.target.clone(),
            cycle: cycle.to_string(),
            value: *v,
        }),
        None => {
            report.unmapped_values += 1;
            Ok(CellValue::Missing(MissingCode::DOT))
        }
    }
}

/// Inner join of two views on the respondent key.
pub fn join_views(left: &ColumnTable, right: &ColumnTable) -> Result<ColumnTable, HarmonizeError> {
    Ok(left.inner_join(right)?)
}

/// Full outer merge of several raw tables on the respondent key: the output
/// has one row per distinct key (first-seen order) and the union of columns;
/// cells absent from a table read as missing. Duplicate non-key column names
/// keep the first table's version.
pub fn outer_merge(tables: &[ColumnTable]) -> Result<ColumnTable, HarmonizeError> {
    let Some(first) = tables.first() else {
        return Ok(ColumnTable::new("SEQN"));
    };
    let mut key_order: Vec<CellValue> = Vec::new();
    let mut key_index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for table in tables {
        for key in table.keys()? {
            let repr = ColumnTable::key_repr(key);
            if !key_index.contains_key(&repr) {
                key_index.insert(repr, key_order.len());
                key_order.push(key.clone());
            }
        }
    }

    let mut out = ColumnTable::new(first.key_name());
    out.push_column(first.key_name().to_string(), key_order.clone())?;
    let mut seen: std::collections::HashSet<String> =
        std::iter::once(first.key_name().to_string()).collect();
    for table in tables {
        let rows: Vec<usize> = table
            .keys()?
            .iter()
            .map(|k| key_index[&ColumnTable::key_repr(k)])
            .collect();
        for name in table.column_names() {
            if !seen.insert(name.to_string()) {
                continue;
            }
            let source = table.column(name).expect("listed column exists");
            let mut col = vec![CellValue::Missing(MissingCode::DOT); key_order.len()];
            for (src_row, &dst_row) in rows.iter().enumerate() {
                col[dst_row] = source[src_row].clone();
            }
            out.push_column(name.to_string(), col)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompleteCasesResult {
    pub table: ColumnTable,
    pub retained: usize,
    pub dropped: usize,
}

/// Keep rows with no missing value in the listed columns.
pub fn complete_cases(
    table: &ColumnTable,
    columns: &[String],
) -> Result<CompleteCasesResult, HarmonizeError> {
    let cols: Vec<&[CellValue]> = columns
        .iter()
        .map(|name| {
            table
                .column(name)
                .ok_or_else(|| HarmonizeError::UnknownColumn(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mask: Vec<bool> = (0..table.n_rows())
        .map(|i| cols.iter().all(|c| !c[i].is_missing()))
        .collect();
    let retained = mask.iter().filter(|&&m| m).count();
    Ok(CompleteCasesResult {
        table: table.filter_rows(&mask),
        dropped: table.n_rows() - retained,
        retained,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub count: usize,
    pub mean: Option<f64>,
    /// sample std; undefined (None) when count < 2
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub p25: Option<f64>,
    pub p50: Option<f64>,
    pub p75: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats {
    pub columns: Vec<ColumnSummary>,
    pub rows_used: usize,
}

/// Percentile by linear interpolation between closest ranks.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-column stats over non-missing values. With `adult_age_column` set,
/// rows are first restricted to age > 20.
pub fn summarize(
    table: &ColumnTable,
    adult_age_column: Option<&str>,
) -> Result<SummaryStats, HarmonizeError> {
    let filtered;
    let table = match adult_age_column {
        Some(age_col) => {
            let ages = table
                .numeric_column(age_col)
                .map_err(|_| HarmonizeError::UnknownColumn(age_col.to_string()))?;
            let mask: Vec<bool> = ages.iter().map(|a| a.map_or(false, |v| v > 20.0)).collect();
            filtered = table.filter_rows(&mask);
            &filtered
        }
        None => table,
    };
    let mut columns = Vec::new();
    for name in table.column_names() {
        if name == table.key_name() {
            continue;
        }
        let col = table.column(name).unwrap();
        if col.iter().any(|c| matches!(c, CellValue::Text(_))) {
            continue; // character columns have no numeric summary
        }
        let mut vals: Vec<f64> = col.iter().filter_map(|c| c.as_num()).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let count = vals.len();
        let summary = if count == 0 {
            ColumnSummary {
                name: name.to_string(),
                count: 0,
                mean: None,
                std: None,
                min: None,
                p25: None,
                p50: None,
                p75: None,
                max: None,
            }
        } else {
            let mean = vals.iter().sum::<f64>() / count as f64;
            let std = if count >= 2 {
                Some(
                    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64)
                        .sqrt(),
                )
            } else {
                None
            };
            ColumnSummary {
                name: name.to_string(),
                count,
                mean: Some(mean),
                std,
                min: Some(vals[0]),
                p25: Some(percentile(&vals, 0.25)),
                p50: Some(percentile(&vals, 0.50)),
                p75: Some(percentile(&vals, 0.75)),
                max: Some(vals[count - 1]),
            }
        };
        columns.push(summary);
    }
    Ok(SummaryStats {
        columns,
        rows_used: table.n_rows(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    /// left-closed edge; the bin covers [left, left + width)
    pub left: f64,
    pub total: usize,
    /// per-group counts when a group_by column was given
    pub groups: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub column: String,
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

/// Left-closed right-open bins anchored at a multiple of `bin_width`.
pub fn histogram(
    table: &ColumnTable,
    column: &str,
    bin_width: f64,
    group_by: Option<&str>,
) -> Result<Histogram, HarmonizeError> {
    if bin_width <= 0.0 {
        return Err(HarmonizeError::NonPositiveBinWidth(bin_width));
    }
    let values = table
        .numeric_column(column)
        .map_err(|_| HarmonizeError::UnknownColumn(column.to_string()))?;
    let groups: Option<Vec<String>> = match group_by {
        Some(g) => {
            let col = table
                .column(g)
                .ok_or_else(|| HarmonizeError::UnknownColumn(g.to_string()))?;
            Some(
                col.iter()
                    .map(|c| match c {
                        CellValue::Num(v) => v.to_string(),
                        CellValue::Text(s) => s.clone(),
                        CellValue::Missing(m) => m.to_string(),
                    })
                    .collect(),
            )
        }
        None => None,
    };

    let mut bins: HashMap<i64, HistogramBin> = HashMap::new();
    for (i, v) in values.iter().enumerate() {
        let Some(v) = v else { continue };
        let idx = (v / bin_width).floor() as i64;
        let bin = bins.entry(idx).or_insert_with(|| HistogramBin {
            left: idx as f64 * bin_width,
            total: 0,
            groups: BTreeMap::new(),
        });
        bin.total += 1;
        if let Some(g) = &groups {
            *bin.groups.entry(g[i].clone()).or_insert(0) += 1;
        }
    }
    let mut bins: Vec<HistogramBin> = bins.into_values().collect();
    bins.sort_by(|a, b| a.left.partial_cmp(&b.left).unwrap());
    Ok(Histogram {
        column: column.to_string(),
        bin_width,
        bins,
    })
}

/// Histogram rendered as a self-contained SVG bar chart (stacked per group).
pub fn histogram_svg(hist: &Histogram, title: &str) -> String {
    let w = 640.0;
    let h = 400.0;
    let margin = 50.0;
    let max_count = hist.bins.iter().map(|b| b.total).max().unwrap_or(1).max(1) as f64;
    let n = hist.bins.len().max(1) as f64;
    let bar_w = (w - 2.0 * margin) / n;
    let palette = ["steelblue", "indianred", "seagreen", "goldenrod", "slategray"];
    let mut bars = String::new();
    for (i, bin) in hist.bins.iter().enumerate() {
        let x = margin + i as f64 * bar_w;
        if bin.groups.is_empty() {
            let bh = bin.total as f64 / max_count * (h - 2.0 * margin);
            bars.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\" stroke=\"white\"/>\n",
                x, h - margin - bh, bar_w, bh
            ));
        } else {
            let mut y0 = h - margin;
            for (gi, (_, count)) in bin.groups.iter().enumerate() {
                let bh = *count as f64 / max_count * (h - 2.0 * margin);
                y0 -= bh;
                bars.push_str(&format!(
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\" stroke=\"white\"/>\n",
                    x, y0, bar_w, bh, palette[gi % palette.len()]
                ));
            }
        }
        bars.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">{}</text>\n",
            x + bar_w / 2.0,
            h - margin + 14.0,
            hist.bins[i].left
        ));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{tx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n<line x1=\"{m}\" y1=\"{ym}\" x2=\"{xm}\" y2=\"{ym}\" stroke=\"black\"/>\n{bars}</svg>\n",
        w = w,
        h = h,
        m = margin,
        xm = w - margin,
        ym = h - margin,
        tx = w / 2.0,
        title = title,
        bars = bars,
    )
}
