//! Standalone SVG figures: convergence history and mesh wireframe.

use std::fmt::Write;

use cordes_fem::adaptivity::{ConvergenceRecord, MeshSnapshot};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 70.0;

struct Series {
    label: &'static str,
    colour: &'static str,
    points: Vec<(f64, f64)>,
}

fn series(records: &[ConvergenceRecord]) -> Vec<Series> {
    let pick = |label, colour, f: fn(&ConvergenceRecord) -> Option<f64>| Series {
        label,
        colour,
        points: records
            .iter()
            .filter_map(|r| f(r).filter(|v| *v > 0.0).map(|v| (r.ndof as f64, v)))
            .collect(),
    };
    [
        pick("eta", "#d62728", |r| Some(r.eta)),
        pick("H2 error", "#1f77b4", |r| r.err_h2),
        pick("gradient error", "#2ca02c", |r| r.err_grad),
        pick("L2 error", "#9467bd", |r| r.err_l2),
    ]
    .into_iter()
    .filter(|s| !s.points.is_empty())
    .collect()
}

/// Log–log plot of the estimator and errors against ndof, with reference
/// slopes −1, −3/2 and −2 anchored at the first estimator value.
pub fn convergence_svg(records: &[ConvergenceRecord]) -> String {
    let data = series(records);
    let all: Vec<(f64, f64)> = data.iter().flat_map(|s| s.points.iter().copied()).collect();
    let lx = |v: f64| v.log10();
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(lx(p.0)), b.max(lx(p.0))));
    let (mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(lx(p.1)), b.max(lx(p.1))));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    x0 = x0.floor();
    x1 = x1.ceil().max(x0 + 1.0);
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let sx = |v: f64| MARGIN + (lx(v) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (lx(v) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for d in x0 as i32..=x1 as i32 {
        let x = sx(10f64.powi(d));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#, HEIGHT - MARGIN + 18.0);
    }
    for d in y0 as i32..=y1 as i32 {
        let y = sy(10f64.powi(d));
        let _ = writeln!(s, r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, WIDTH - MARGIN);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, MARGIN - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">ndof</text>"#, WIDTH / 2.0, HEIGHT - 20.0);

    if let Some(&(n0, e0)) = data.first().and_then(|d| d.points.first()) {
        let n1 = 10f64.powf(x1);
        for (slope, label) in [(-1.0, "O(ndof^-1)"), (-1.5, "O(ndof^-3/2)"), (-2.0, "O(ndof^-2)")] {
            let e1 = e0 * (n1 / n0).powf(slope);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#777" stroke-dasharray="5,4"/>"##,
                sx(n0),
                sy(e0),
                sx(n1),
                sy(e1)
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" fill="#555" text-anchor="end">{label}</text>"##,
                sx(n1) - 4.0,
                sy(e1) - 4.0
            );
        }
    }
    for (k, d) in data.iter().enumerate() {
        let pts: Vec<String> = d.points.iter().map(|&(n, e)| format!("{:.2},{:.2}", sx(n), sy(e))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            d.colour
        );
        for &(n, e) in &d.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, sx(n), sy(e), d.colour);
        }
        let ly = MARGIN + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/>"#,
            WIDTH - MARGIN - 130.0,
            WIDTH - MARGIN - 110.0,
            d.colour
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, WIDTH - MARGIN - 104.0, ly + 4.0, d.label);
    }
    s.push_str("</svg>\n");
    s
}

/// Wireframe of a mesh on (−1, 1)².
pub fn mesh_svg(mesh: &MeshSnapshot) -> String {
    const SIZE: f64 = 640.0;
    const PAD: f64 = 10.0;
    let map = |p: [f64; 2]| (PAD + (p[0] + 1.0) / 2.0 * (SIZE - 2.0 * PAD), SIZE - PAD - (p[1] + 1.0) / 2.0 * (SIZE - 2.0 * PAD));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut path = String::new();
    for poly in mesh.polygons() {
        for (k, &p) in poly.iter().enumerate() {
            let (x, y) = map(p);
            let _ = write!(path, "{}{x:.3},{y:.3}", if k == 0 { "M" } else { "L" });
        }
        path.push('Z');
    }
    let _ = writeln!(s, r#"<path d="{path}" fill="none" stroke="black" stroke-width="0.4"/>"#);
    s.push_str("</svg>\n");
    s
}
