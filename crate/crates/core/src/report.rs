//! Shared text formatting for CSV outputs.

/// 17 significant digits, so every `f64` round-trips and repeated runs
/// produce byte-identical files.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Formats a row-major matrix as CSV without a header.
pub fn matrix_csv(rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
