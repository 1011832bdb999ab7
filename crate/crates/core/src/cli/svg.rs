//! Minimal static SVG line charts.
//!
//! Layout: 720×440 canvas, 70px left and 50px bottom margins, series drawn
//! as polylines in a fixed palette. Each polyline carries the exact plotted
//! numbers in `data-x`/`data-y` (space separated, as written to the CSVs) so
//! the files can be checked against their source tables.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// Values as they appear in the CSV.
    pub x: Vec<String>,
    pub y: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    /// Draw as a right-continuous step function.
    pub steps: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Chart {
    fn numeric(&self) -> Vec<Vec<(f64, f64)>> {
        self.series
            .iter()
            .map(|s| {
                s.x.iter()
                    .zip(&s.y)
                    .filter_map(|(x, y)| Some((x.parse::<f64>().ok()?, y.parse::<f64>().ok()?)))
                    .map(|(x, y)| (if self.log_x { x.max(1e-300).log10() } else { x }, y))
                    .collect()
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let pts = self.numeric();
        let all = pts.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        y0 = y0.min(0.0);
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let xl = if self.log_x { format!("{:.3}", 10f64.powf(fx)) } else { format!("{fx:.0}") };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xl}</text>"#,
                sx(fx),
                TOP + ph + 18.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
                LEFT - 6.0,
                sy(fy) + 4.0,
                fy
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, (s, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut coords = Vec::new();
            for (j, &(x, y)) in p.iter().enumerate() {
                if self.steps && j > 0 {
                    coords.push(format!("{:.2},{:.2}", sx(x), sy(p[j - 1].1)));
                }
                coords.push(format!("{:.2},{:.2}", sx(x), sy(y)));
            }
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-label="{}" data-x="{}" data-y="{}" fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                escape(&s.label),
                s.x.join(" "),
                s.y.join(" "),
                coords.join(" ")
            );
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn unescape(s: &str) -> String {
    s.replace("&quot;", "\"").replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&")
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

/// Recovers the `(label, x, y)` data of every series in a rendered chart.
pub fn read_series(svg: &str) -> Vec<Series> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline class=\"series\""))
        .filter_map(|l| {
            let split = |v: &str| -> Vec<String> {
                v.split(' ').filter(|s| !s.is_empty()).map(str::to_string).collect()
            };
            Some(Series {
                label: unescape(attr(l, "data-label")?),
                x: split(attr(l, "data-x")?),
                y: split(attr(l, "data-y")?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_survive_rendering() {
        let chart = Chart {
            title: "a <b>".into(),
            x_label: "draws".into(),
            y_label: "regret".into(),
            log_x: false,
            steps: false,
            series: vec![
                Series { label: "mf \"0.3\"".into(), x: vec!["70".into(), "140".into()], y: vec!["0.5".into(), "0.25".into()] },
                Series { label: "g".into(), x: vec!["70".into()], y: vec!["1e-7".into()] },
            ],
        };
        let svg = chart.render();
        assert_eq!(read_series(&svg), chart.series);
    }
}
