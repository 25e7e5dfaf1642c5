//! Output: one JSON record per invocation, or plain text tables.

use serde::Serialize;
use std::io::{self, Write};

/// Compact JSON with every float written as `d.dddddddddddddddde±x`, 17
/// significant digits, so that parsing the text gives back the same f64.
/// Non-finite values are written as `null`.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).expect("records serialize to memory");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn print_json<T: Serialize>(value: &T) {
    outln!("{}", to_json(value));
}

/// Left-aligned first column, right-aligned rest.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (j, cell) in row.iter().enumerate().take(ncol) {
            width[j] = width[j].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (j, cell) in cells.iter().enumerate() {
            if j > 0 {
                s.push_str("  ");
            }
            if j == 0 {
                s.push_str(&format!("{cell:<w$}", w = width[j]));
            } else {
                s.push_str(&format!("{cell:>w$}", w = width[j]));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}
