//! CSV and SVG emission.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) if x.is_nan() => "NaN".into(),
            Cell::F(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::F(x) => format!("{x:.16e}"),
            Cell::U(n) => n.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn sci(x: f64) -> String {
    Cell::F(x).render()
}

/// A CSV document preceded by `#` comment lines.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            comments: Vec::new(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Tick positions covering `[lo, hi]` with a step of 1, 2 or 5 times a power
/// of ten, aiming for about `target` intervals.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{x:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:e}")
    }
}

/// A standalone SVG line chart of one series; non-finite points split the
/// polyline.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = finite.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if finite.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - L - R,
        H - T - B
    );
    for x in nice_ticks(x0, x1, 6) {
        let p = px(x);
        let _ = writeln!(s, r#"<line x1="{p:.2}" y1="{}" x2="{p:.2}" y2="{}" stroke="black"/>"#, H - B, H - B + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{p:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            H - B + 18.0,
            tick_label(x)
        );
    }
    for y in nice_ticks(y0, y1, 6) {
        let p = py(y);
        let _ = writeln!(s, r#"<line x1="{}" y1="{p:.2}" x2="{L}" y2="{p:.2}" stroke="black"/>"#, L - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            L - 8.0,
            p + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        L + (W - L - R) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
        T + (H - T - B) / 2.0,
        T + (H - T - B) / 2.0,
        escape(y_label)
    );
    for segment in points.split(|(x, y)| !(x.is_finite() && y.is_finite())) {
        if segment.is_empty() {
            continue;
        }
        let coords: Vec<String> = segment.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_follow_125() {
        assert_eq!(nice_ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = nice_ticks(-0.75, 20.0, 6);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t[1] - t[0] - 5.0).abs() < 1e-12);
        let t = nice_ticks(3.0, 3.7, 5);
        assert!((t[1] - t[0] - 0.2).abs() < 1e-12);
        assert_eq!(nice_ticks(1.0, 1.0, 5), vec![1.0]);
    }

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(&["x", "n", "ok"]);
        t.comments.push("k = v".into());
        t.push(vec![Cell::F(0.1), Cell::U(3), Cell::B(true)]);
        t.push(vec![Cell::F(f64::NAN), Cell::U(0), Cell::B(false)]);
        assert_eq!(t.render(), "# k = v\nx,n,ok\n1.0000000000000001e-1,3,true\nNaN,0,false\n");
    }

    #[test]
    fn chart_splits_on_nan() {
        let svg = line_chart("t", "x", "y", &[(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 0.0), (4.0, 1.0)]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        let empty = line_chart("a < b", "x", "y", &[]);
        assert!(empty.contains("a &lt; b"));
    }
}
