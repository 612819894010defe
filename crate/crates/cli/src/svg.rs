//! Minimal SVG figures with a fixed layout. Coordinates are printed with two
//! decimals so identical inputs give identical files.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Shaded interval drawn under the lines.
pub struct Band {
    pub name: String,
    pub x: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = range(xs);
        let (y0, y1) = range(ys);
        let pad = 0.05 * (y1 - y0);
        Self {
            x0,
            x1,
            y0: y0 - pad,
            y1: y1 + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str, sc: &Scale, x_ticks: bool) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, r - l, b - t);
    for i in 0..=4 {
        let v = sc.y0 + (sc.y1 - sc.y0) * i as f64 / 4.0;
        let y = sc.py(v);
        let _ = writeln!(out, r##"<line x1="{l:.2}" y1="{y:.2}" x2="{r:.2}" y2="{y:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, label(v));
        if x_ticks {
            let xv = sc.x0 + (sc.x1 - sc.x0) * i as f64 / 4.0;
            let x = sc.px(xv);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, b + 18.0, label(xv));
        }
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 14.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, i: usize, name: &str, color: &str) {
    let x = W - RIGHT + 12.0;
    let y = TOP + 10.0 + 18.0 * i as f64;
    if y > H - BOTTOM {
        return;
    }
    let _ = writeln!(out, r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 9.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 18.0, y + 1.0, escape(name));
}

/// Line chart with optional shaded bands.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], bands: &[Band]) -> String {
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .chain(bands.iter().flat_map(|b| b.x.iter().copied()));
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .chain(bands.iter().flat_map(|b| b.lo.iter().chain(&b.hi).copied()));
    let sc = Scale::new(xs.collect::<Vec<_>>().into_iter(), ys.collect::<Vec<_>>().into_iter());
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, &sc, true);
    let mut k = 0;
    for b in bands {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (i, (x, hi)) in b.x.iter().zip(&b.hi).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sc.px(*x), sc.py(*hi));
        }
        for (x, lo) in b.x.iter().zip(&b.lo).rev() {
            let _ = write!(d, "L{:.2},{:.2} ", sc.px(*x), sc.py(*lo));
        }
        let _ = writeln!(out, r#"<path d="{}Z" fill="{color}" fill-opacity="0.25" stroke="none"/>"#, d);
        legend(&mut out, k, &b.name, color);
        k += 1;
    }
    for s in series {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sc.px(x), sc.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        legend(&mut out, k, &s.name, color);
        k += 1;
    }
    out.push_str("</svg>\n");
    out
}

/// One box per group: quartiles, median, and whiskers at the extremes.
pub fn box_plot(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let sc0 = Scale::new(
        [0.0, groups.len() as f64].into_iter(),
        groups.iter().flat_map(|g| g.1.iter().copied()).collect::<Vec<_>>().into_iter(),
    );
    let mut out = String::new();
    frame(&mut out, title, "", y_label, &sc0, false);
    for (i, (name, v)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        if s.is_empty() {
            continue;
        }
        s.sort_by(f64::total_cmp);
        let q = |p: f64| proxyrecon::numerics::quantile_sorted(&s, p);
        let cx = sc0.px(i as f64 + 0.5);
        let half = 0.3 * (sc0.px(1.0) - sc0.px(0.0));
        let (lo, q1, med, q3, hi) = (sc0.py(s[0]), sc0.py(q(0.25)), sc0.py(q(0.5)), sc0.py(q(0.75)), sc0.py(s[s.len() - 1]));
        let _ = writeln!(out, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{q3:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
            cx - half,
            2.0 * half,
            q1 - q3
        );
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{med:.2}" x2="{:.2}" y2="{med:.2}" stroke="black" stroke-width="2"/>"#, cx - half, cx + half);
        let _ = writeln!(out, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Overlaid histograms on shared bins.
pub fn histogram(title: &str, x_label: &str, groups: &[(String, Vec<f64>)], bins: usize) -> String {
    let (lo, hi) = range(groups.iter().flat_map(|g| g.1.iter().copied()));
    let width = (hi - lo) / bins as f64;
    let counts: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0.0; bins];
            for &x in v.iter().filter(|x| x.is_finite()) {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                c[b] += 1.0 / v.len() as f64;
            }
            c
        })
        .collect();
    let sc = Scale::new([lo, hi].into_iter(), counts.iter().flatten().copied().chain([0.0]).collect::<Vec<_>>().into_iter());
    let mut out = String::new();
    frame(&mut out, title, x_label, "share", &sc, true);
    for (i, ((name, _), c)) in groups.iter().zip(&counts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (b, &h) in c.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let x0 = sc.px(lo + b as f64 * width);
            let x1 = sc.px(lo + (b + 1) as f64 * width);
            let (y0, y1) = (sc.py(h), sc.py(0.0_f64.max(sc.y0)));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                x1 - x0,
                y1 - y0
            );
        }
        legend(&mut out, i, name, color);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_deterministic_and_well_formed() {
        let s = vec![Series {
            name: "a<b".into(),
            points: (0..10).map(|i| (i as f64, (i * i) as f64)).collect(),
        }];
        let a = line_plot("t", "x", "y", &s, &[]);
        assert_eq!(a, line_plot("t", "x", "y", &s, &[]));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b"));
    }

    #[test]
    fn constant_data_does_not_divide_by_zero() {
        let g = vec![("flat".to_string(), vec![1.0; 5])];
        assert!(!box_plot("t", "y", &g).contains("NaN"));
        assert!(!histogram("t", "x", &g, 10).contains("NaN"));
    }
}
