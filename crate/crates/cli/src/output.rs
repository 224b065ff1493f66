//! Artifact writing: `#` manifest header, fixed 12-digit number format,
//! CSV or JSON body.

use std::io::Write;

use serde::Serialize;

/// Significant digits of every number written.
pub const DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_sig(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            // Round-trip through the text form so JSON and CSV agree.
            Cell::Num(v) if v.is_finite() => fmt_sig(*v).parse::<f64>().map_or(serde_json::Value::Null, Into::into),
            Cell::Num(v) => fmt_sig(*v).into(),
            Cell::Int(v) => (*v).into(),
            Cell::Text(s) => s.clone().into(),
            Cell::Bool(b) => (*b).into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// `%.12g`-style formatting: fixed notation for exponents in `[-4, 12)`,
/// scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..DIGITS as i32).contains(&exp) {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    /// Parsed invocation; `replay` feeds it back in.
    pub args: serde_json::Value,
    pub version: String,
    pub seed: Option<u64>,
    /// `(state, truncation dim, leakage)`.
    pub truncation: Vec<(String, usize, f64)>,
    pub notes: Vec<String>,
    /// Seconds since the Unix epoch; only with `--stamp`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl Manifest {
    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("command: {}", self.command),
            format!("args: {}", self.args),
            format!("version: spreadchan {}", self.version),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed: {seed}"));
        }
        for (label, dim, leak) in &self.truncation {
            lines.push(format!("dim: {label} = {dim} (leakage {})", fmt_sig(*leak)));
        }
        for note in &self.notes {
            lines.push(format!("note: {note}"));
        }
        if let Some(t) = self.timestamp {
            lines.push(format!("timestamp: {t} (not reproducible)"));
        }
        lines
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn write_csv<W: Write>(out: &mut W, manifest: &Manifest, table: &Table) -> anyhow::Result<()> {
    for line in manifest.header_lines() {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(out: &mut W, manifest: &Manifest, table: &Table) -> anyhow::Result<()> {
    let rows: Vec<Vec<serde_json::Value>> = table.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect();
    let doc = serde_json::json!({
        "manifest": manifest,
        "columns": table.columns,
        "rows": rows,
    });
    serde_json::to_writer_pretty(&mut *out, &doc)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_sig(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_sig(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_sig(1e-5), "1e-05");
        assert_eq!(fmt_sig(1e-4), "0.0001");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::NAN), "nan");
    }

    #[test]
    fn csv_quotes_labels_with_commas() {
        let m = Manifest {
            command: "x".into(),
            args: serde_json::json!({}),
            version: "0".into(),
            seed: None,
            truncation: vec![],
            notes: vec![],
            timestamp: None,
        };
        let mut t = Table::new(&["state", "v"]);
        t.push(vec!["sq:r=1,theta=0".into(), Cell::Empty]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &m, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.ends_with("state,v\n\"sq:r=1,theta=0\",\n"), "{s}");
        assert!(!s.contains('\r'));
    }
}
