//! Minimal line plots: one polyline per group, axes, labels, no assets.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use crate::error::{LabError, LabResult};
use crate::table::Table;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn numeric(table: &Table, col: usize, row: usize) -> LabResult<f64> {
    let s = &table.rows[row][col];
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| LabError::Plot(format!("row {row}, column `{}`: `{s}` is not a finite number", table.header[col])))
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `y_col` against `x_col`, one polyline per distinct `group_col`
/// value (in order of first appearance).
pub fn render(table: &Table, x_col: &str, y_col: &str, group_col: Option<&str>) -> LabResult<String> {
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| LabError::Plot(format!("no column `{name}`")))
    };
    let (xi, yi) = (col(x_col)?, col(y_col)?);
    let gi = group_col.map(col).transpose()?;
    if table.rows.is_empty() {
        return Err(LabError::Plot("no data rows".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in 0..table.rows.len() {
        let key = gi.map(|g| table.rows[r][g].clone()).unwrap_or_default();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push((numeric(table, xi, r)?, numeric(table, yi, r)?));
    }
    let all = || groups.values().flatten();
    let (x0, x1) = range(all().map(|p| p.0));
    let (y0, y1) = range(all().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="middle">{x0:.4}</text>"#, b + 16.0);
    let _ = writeln!(s, r#"<text x="{r}" y="{}" text-anchor="middle">{x1:.4}</text>"#, b + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{b}" text-anchor="end">{y0:.4}</text>"#, l - 6.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.4}</text>"#, l - 6.0, t + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 18.0, escape(x_col));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_col)
    );
    for (k, key) in order.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = groups[key].iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        if let Some(g) = group_col {
            let ly = t + 14.0 * k as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}={}</text>"#, r - 90.0, escape(g), escape(key));
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads `csv_path` and writes the plot to `svg_path`.
pub fn emit_svg(csv_path: &Path, x_col: &str, y_col: &str, group_col: Option<&str>, svg_path: &Path) -> LabResult<()> {
    let svg = render(&Table::read(csv_path)?, x_col, y_col, group_col)?;
    std::fs::write(svg_path, svg).map_err(|e| LabError::io(svg_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[&str; 3]]) -> Table {
        let mut t = Table::new(["eta", "x", "y"]);
        for r in rows {
            t.push(r.iter().map(|s| s.to_string()).collect());
        }
        t
    }

    #[test]
    fn one_polyline_per_group() {
        let two = table(&[["0", "0", "1"], ["0", "1", "2"]]);
        let svg = render(&two, "x", "y", None).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let grouped = table(&[["0", "0", "1"], ["0.5", "0", "2"], ["0", "1", "3"], ["1", "0", "0"]]);
        let svg = render(&grouped, "x", "y", Some("eta")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg, render(&grouped, "x", "y", Some("eta")).unwrap());
    }

    #[test]
    fn plot_errors() {
        assert!(render(&table(&[]), "x", "y", None).is_err());
        assert!(render(&table(&[["0", "a", "1"]]), "x", "y", None).is_err());
        assert!(render(&table(&[["0", "1", "1"]]), "x", "z", None).is_err());
        let single = render(&table(&[["0", "1", "1"]]), "x", "y", None).unwrap();
        assert!(!single.contains("NaN"));
    }
}
