//! Minimal static SVG: step-line plots over periods and a shaded grid table.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
    pub dashed: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Step plot of per-period values, one line per series.
pub fn step_plot(title: &str, y_label: &str, series: &[Series]) -> String {
    let periods = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(1);
    let y_max = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;
    let sx = (W - 2.0 * PAD) / periods as f64;
    let sy = (H - 2.0 * PAD) / y_max;
    let x = |t: f64| PAD + t * sx;
    let y = |v: f64| H - PAD - v.max(0.0) * sy;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, PAD - 4.0, y(v) + 4.0);
    }
    let step = (periods / 12).max(1);
    for t in (0..periods).step_by(step) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x(t as f64 + 0.5), H - PAD + 14.0, t + 1);
    }
    let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, esc(y_label));
    for (k, ser) in series.iter().enumerate() {
        let mut pts = String::new();
        for (t, v) in ser.values.iter().enumerate() {
            let _ = write!(pts, "{:.1},{:.1} {:.1},{:.1} ", x(t as f64), y(*v), x(t as f64 + 1.0), y(*v));
        }
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#, pts.trim_end(), ser.color);
        let ly = PAD + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{c}" stroke-width="2"{dash}/><text x="{tx}" y="{ty}">{n}</text>"#,
            a = W - PAD - 120.0,
            b = W - PAD - 100.0,
            c = ser.color,
            tx = W - PAD - 95.0,
            ty = ly + 4.0,
            n = esc(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grid of values shaded from white (smallest) to blue (largest), each cell
/// labelled with its value. Non-finite cells are grey.
pub fn heat_table(title: &str, row_labels: &[String], col_labels: &[String], values: &[Vec<f64>]) -> String {
    let cw = 64.0;
    let ch = 22.0;
    let left = 72.0;
    let top = 48.0;
    let w = left + cw * col_labels.len() as f64 + 16.0;
    let h = top + ch * row_labels.len() as f64 + 16.0;
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, esc(title));
    for (j, c) in col_labels.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, left + cw * (j as f64 + 0.5), top - 6.0, esc(c));
    }
    for (i, r) in row_labels.iter().enumerate() {
        let yy = top + ch * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, yy + ch * 0.65, esc(r));
        for (j, v) in values[i].iter().enumerate() {
            let fill = if v.is_finite() {
                let a = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let c = |full: f64| (255.0 - a * (255.0 - full)).round() as u8;
                format!("#{:02x}{:02x}{:02x}", c(40.0), c(90.0), c(200.0))
            } else {
                "#cccccc".to_string()
            };
            let xx = left + cw * j as f64;
            let _ = writeln!(s, r#"<rect x="{xx:.1}" y="{yy:.1}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/>"#);
            let label = if v.is_finite() { format!("{v:.2}") } else { "-".into() };
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#, xx + cw / 2.0, yy + ch * 0.65);
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_has_one_polyline_per_series() {
        let a = [1.0, 2.0, 0.5];
        let b = [1.5, 1.5, 1.5];
        let svg = step_plot(
            "import <kW>",
            "kW",
            &[
                Series { name: "import", values: &a, color: "black", dashed: false },
                Series { name: "cap", values: &b, color: "red", dashed: true },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("import &lt;kW&gt;"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn table_greys_missing_cells() {
        let svg = heat_table(
            "cost",
            &["0.4".into()],
            &["0.5".into(), "1".into()],
            &[vec![3.0, f64::NAN]],
        );
        assert!(svg.contains("#cccccc"));
        assert_eq!(svg.matches("<rect x=").count(), 2);
    }
}
