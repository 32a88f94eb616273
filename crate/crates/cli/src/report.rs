//! CSV table and SVG chart for experiment reports.

use std::fmt::Write as _;

use cblue_core::{MseKind, MseReport};

fn csv_header() -> Vec<String> {
    let mut cols = vec!["k".to_string()];
    cols.extend(MseKind::ALL.iter().map(|k| format!("mse_{}", k.column())));
    cols.extend(MseKind::ALL.iter().map(|k| format!("analytic_{}", k.column())));
    cols
}

/// Scientific notation with 13 significant digits; independent of locale.
fn num(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn to_csv(report: &MseReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header()).expect("in-memory write");
    for row in &report.rows {
        let mut fields = vec![num(row.k)];
        fields.extend(MseKind::ALL.iter().map(|&k| num(row.get(k).empirical_mse)));
        fields.extend(MseKind::ALL.iter().map(|&k| num(row.get(k).analytic_mse)));
        w.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII fields")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

fn style(kind: MseKind) -> (&'static str, &'static str) {
    let color = match kind {
        MseKind::Ls | MseKind::LsMeanSub | MseKind::Cls => "#1f4fbf",
        MseKind::Blue | MseKind::BlueMeanSub | MseKind::Cblue => "#c0392b",
    };
    let dash = match kind {
        MseKind::Ls | MseKind::Blue => "2,3",
        MseKind::LsMeanSub | MseKind::BlueMeanSub => "8,4",
        MseKind::Cls | MseKind::Cblue => "",
    };
    (color, dash)
}

/// Whole decades enclosing `[lo, hi]`.
fn decades(lo: f64, hi: f64) -> (i32, i32) {
    let a = lo.log10().floor() as i32;
    let mut b = hi.log10().ceil() as i32;
    if b <= a {
        b = a + 1;
    }
    (a, b)
}

/// Log-log chart of the empirical MSE curves against `k`.
pub fn to_svg(report: &MseReport) -> String {
    let ks: Vec<f64> = report.rows.iter().map(|r| r.k).collect();
    let values: Vec<f64> = report
        .rows
        .iter()
        .flat_map(|r| MseKind::ALL.iter().map(move |&k| r.get(k).empirical_mse))
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    let fmin = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = decades(fmin(&ks), fmax(&ks));
    let (y0, y1) = if values.is_empty() {
        (-1, 0)
    } else {
        decades(fmin(&values), fmax(&values))
    };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |k: f64| LEFT + (k.log10() - x0 as f64) / (x1 - x0) as f64 * pw;
    let py = |v: f64| TOP + ph - (v.log10() - y0 as f64) / (y1 - y0) as f64 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    for e in x0..=x1 {
        let x = px(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#,
            TOP + ph + 18.0
        );
    }
    for e in y0..=y1 {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">k</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">average MSE</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, &kind) in MseKind::ALL.iter().enumerate() {
        let (color, dash) = style(kind);
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let points: Vec<String> = report
            .rows
            .iter()
            .map(|r| (r.k, r.get(kind).empirical_mse))
            .filter(|(_, v)| *v > 0.0 && v.is_finite())
            .map(|(k, v)| format!("{:.2},{:.2}", px(k), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash_attr} points="{}"/>"#,
            kind.column(),
            points.join(" ")
        );

        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.6"{dash_attr}/>"#,
            lx + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 36.0,
            ly + 4.0,
            kind.display_name()
        );
    }
    s.push_str("</svg>\n");
    s
}
