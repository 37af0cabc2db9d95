//! Bulk CSV import: `point_id,timestamp,parameter,value`, one parameter per
//! row. Rows are grouped by point and resolution-aligned timestamp into
//! records; parameters a record never receives are left at zero and the
//! record is flagged INCOMPLETE.

use std::collections::BTreeMap;

use gridmon_core::{
    param_index, validate_record, window_align, BaseRecord, PointRegistry, RecordFlags, Resolution,
    PARAM_COUNT,
};
use serde::Serialize;

use crate::timefmt::parse_ts;

pub const IMPORT_HEADER: [&str; 4] = ["point_id", "timestamp", "parameter", "value"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineRejection {
    /// 1-based line number in the uploaded file; the header is line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("expected header `{}`", IMPORT_HEADER.join(","))]
    BadHeader,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Records built from a file plus, for each record, the lines it came from.
#[derive(Debug, Default)]
pub struct ParsedImport {
    pub records: Vec<(BaseRecord, Vec<u64>)>,
    pub rejected: Vec<LineRejection>,
}

#[derive(Default)]
struct Group {
    values: [Option<f64>; PARAM_COUNT],
    lines: Vec<u64>,
}

/// Parses and groups rows. `authorize` decides per point whether the caller
/// may write it; `registry` validates finished records.
pub fn parse_import(
    body: &[u8],
    resolution: Resolution,
    registry: &PointRegistry,
    authorize: impl Fn(u32) -> bool,
) -> Result<ParsedImport, ImportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(body);
    let header = rdr.headers()?.clone();
    if header.len() != 4 || header.iter().zip(IMPORT_HEADER).any(|(a, b)| a != b) {
        return Err(ImportError::BadHeader);
    }
    let mut out = ParsedImport::default();
    let mut groups: BTreeMap<(u32, u64), Group> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let reject = |reason: &str| LineRejection {
            line,
            reason: reason.to_string(),
        };
        if row.len() != 4 {
            out.rejected.push(reject("WRONG_FIELD_COUNT"));
            continue;
        }
        let Ok(point) = row[0].parse::<u32>() else {
            out.rejected.push(reject("BAD_POINT_ID"));
            continue;
        };
        let Some(ts) = parse_ts(&row[1]) else {
            out.rejected.push(reject("BAD_TIMESTAMP"));
            continue;
        };
        let Some(param) = param_index(&row[2]) else {
            out.rejected.push(reject("UNKNOWN_PARAMETER"));
            continue;
        };
        let Ok(value) = row[3].parse::<f64>() else {
            out.rejected.push(reject("BAD_VALUE"));
            continue;
        };
        if !authorize(point) {
            out.rejected.push(reject("FORBIDDEN_POINT"));
            continue;
        }
        let g = groups.entry((point, window_align(ts, resolution))).or_default();
        // a repeated (point, ts, parameter) keeps the last row's value
        g.values[param] = Some(value);
        g.lines.push(line);
    }

    for ((point, ts), g) in groups {
        let mut r = BaseRecord::zeroed(point, ts, resolution);
        let mut values = [0.0; PARAM_COUNT];
        for (k, v) in g.values.iter().enumerate() {
            values[k] = v.unwrap_or(0.0);
        }
        r.set_values(&values);
        if g.values.iter().any(Option::is_none) {
            r.flags |= RecordFlags::INCOMPLETE;
        }
        match validate_record(&r, registry) {
            Ok(()) => out.records.push((r, g.lines)),
            Err(reason) => out.rejected.extend(g.lines.into_iter().map(|line| LineRejection {
                line,
                reason: reason.to_string(),
            })),
        }
    }
    out.rejected.sort_by_key(|r| r.line);
    Ok(out)
}
