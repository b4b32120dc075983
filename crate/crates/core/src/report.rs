//! Deterministic emission helpers: fixed-precision float formatting and a
//! minimal CSV writer. All floats are written with 17 significant digits so
//! values round-trip exactly.

use std::fmt::Write as _;

/// 17-significant-digit scientific notation; round-trips through f64 parse.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{x:.16e}")
}

/// Builds a CSV document from a header and rows of preformatted cells.
/// Optional leading `# key=value` comment lines carry provenance.
pub fn csv_document(comments: &[String], header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[
            0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            1e-300,
            123456.789,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn csv_layout() {
        let doc = csv_document(
            &["seed=1".to_string()],
            &["a", "b"],
            &[vec!["1".into(), "2".into()]],
        );
        assert_eq!(doc, "# seed=1\na,b\n1,2\n");
    }
}
