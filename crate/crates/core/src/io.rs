//! Output formats shared by the library and the command-line front end.
//!
//! CSV: comma separated, header row, LF endings, floats with 17 significant
//! digits so that every value round-trips exactly. JSON encodes `+∞` as the
//! string `"inf"`.

use std::fmt::Write as _;

use serde::Serializer;
use serde_json::Value;

/// Formats a float with 17 significant digits (`inf`, `-inf`, `nan` for
/// non-finite values).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // `+ 0.0` folds -0 into 0
        format!("{:.16e}", x + 0.0)
    }
}

/// JSON value of a float, with infinities as strings.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::from(fmt_f64(x))
    }
}

/// Reads back a value written by [`json_f64`].
pub fn f64_from_json(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// `serialize_with` adapter for [`json_f64`].
pub fn serialize_extended_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&json_f64(*x), s)
}

/// Incremental CSV writer producing the dialect described above.
pub struct CsvBuilder {
    buf: String,
    columns: usize,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        CsvBuilder { buf, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::F(x) => self.buf.push_str(&fmt_f64(*x)),
                Cell::I(n) => {
                    let _ = write!(self.buf, "{n}");
                }
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Cell {
    F(f64),
    I(u64),
}
