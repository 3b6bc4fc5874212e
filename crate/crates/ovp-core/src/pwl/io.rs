//! Canonical table file form: JSON with raw integer payloads so files are
//! bit-exact, never floats.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fx::FixedPointFormat;

use super::{PwlError, PwlTable, RangePolicy};

#[derive(Serialize, Deserialize)]
struct TableFile {
    degree: u8,
    input_fmt: FixedPointFormat,
    output_fmt: FixedPointFormat,
    recip_fmt: FixedPointFormat,
    knots_raw: Vec<i64>,
    values_raw: Vec<i64>,
    recip_width_raw: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mid_values_raw: Option<Vec<i64>>,
    range_policy: RangePolicy,
    prescale: i8,
    postscale: i8,
}

pub fn table_to_json(table: &PwlTable) -> String {
    let file = TableFile {
        degree: table.degree(),
        input_fmt: table.input_fmt(),
        output_fmt: table.output_fmt(),
        recip_fmt: table.recip_fmt(),
        knots_raw: table.knots_raw().to_vec(),
        values_raw: table.values_raw().to_vec(),
        recip_width_raw: table.recip_width_raw().to_vec(),
        mid_values_raw: table.mid_values_raw().map(|m| m.to_vec()),
        range_policy: table.range_policy(),
        prescale: table.prescale(),
        postscale: table.postscale(),
    };
    serde_json::to_string_pretty(&file).expect("table serialization cannot fail")
}

pub fn table_from_json(json: &str) -> Result<PwlTable, PwlError> {
    let file: TableFile = serde_json::from_str(json)?;
    let table = PwlTable::from_raw_parts(
        file.knots_raw,
        file.values_raw,
        file.mid_values_raw,
        file.input_fmt,
        file.output_fmt,
        file.degree,
        file.range_policy,
        file.prescale,
        file.postscale,
    )?;
    // The file carries the reciprocal payloads explicitly; reject files
    // whose recorded values disagree with the knots they claim to match.
    if file.recip_fmt != table.recip_fmt() {
        return Err(PwlError::Field {
            field: "recip_fmt",
            detail: format!("expected {} for these knots, got {}", table.recip_fmt(), file.recip_fmt),
        });
    }
    if file.recip_width_raw != table.recip_width_raw() {
        return Err(PwlError::Field {
            field: "recip_width_raw",
            detail: "inconsistent with knots_raw spacing".into(),
        });
    }
    Ok(table)
}

pub fn write_table(table: &PwlTable, path: &Path) -> Result<(), PwlError> {
    let mut s = table_to_json(table);
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<PwlTable, PwlError> {
    let s = fs::read_to_string(path)?;
    table_from_json(&s)
}
