//! Plain-text number formatting and CSV assembly shared by every exporter.

use std::fmt::Write as _;

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed,
/// scientific notation when the exponent is below -4 or at least 17.
pub fn g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// A header line followed by one line per row, numbers through [`g17`].
pub fn csv<S: AsRef<str>>(header: &[S], rows: impl IntoIterator<Item = Vec<Cell>>) -> String {
    let mut out = String::new();
    let names: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::UInt(v) => v.to_string(),
            Cell::Num(v) => g17(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<u8> for Cell {
    fn from(v: u8) -> Self {
        Cell::UInt(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        assert_eq!(g17(0.25), "0.25");
        assert_eq!(g17(1.0), "1");
        assert_eq!(g17(-3.5), "-3.5");
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(g17(62.6715), "62.671500000000002");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(1.5e-300), "1.5000000000000001e-300");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(12345678901234567.0), "12345678901234568");
        assert_eq!(g17(0.0001), "0.0001");
        assert_eq!(g17(f64::INFINITY), "inf");
        assert_eq!(g17(0.0), "0");
    }

    #[test]
    fn g17_round_trips() {
        for v in [std::f64::consts::PI, 1e-310, 6.02e23, -7.0 / 288.0, f64::MAX, f64::MIN_POSITIVE] {
            assert_eq!(g17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let text = csv(&["ell", "k", "prob"], vec![vec![0u64.into(), 1u8.into(), 0.25.into()]]);
        assert_eq!(text, "ell,k,prob\n0,1,0.25\n");
    }
}
