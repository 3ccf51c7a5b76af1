//! Static SVG figures: ray plots, polar heatmaps and log-log residual curves.

use std::f64::consts::PI;
use std::fmt::Write;

use brt_core::geometry::{Domain, Obstacle};
use brt_core::recon::PolarGrid;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Maps the bounding square of the domain to the canvas with `y` pointing up.
struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn for_domain(domain: &Domain) -> Self {
        let (lo, hi) = domain.bounding_box();
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        Frame { lo, scale: (SIZE - 2.0 * MARGIN) / side }
    }

    fn map(&self, x: [f64; 2]) -> (f64, f64) {
        (MARGIN + (x[0] - self.lo[0]) * self.scale, SIZE - MARGIN - (x[1] - self.lo[1]) * self.scale)
    }
}

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn polyline(frame: &Frame, pts: &[[f64; 2]]) -> String {
    pts.iter()
        .map(|p| {
            let (x, y) = frame.map(*p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn boundary(out: &mut String, frame: &Frame, domain: &Domain) {
    let c = domain.outer_circle();
    let (cx, cy) = frame.map(c.center);
    let _ = writeln!(
        out,
        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>",
        c.radius * frame.scale
    );
    match domain.obstacle {
        Some(Obstacle::Circle(k)) => {
            let (ox, oy) = frame.map(k.center);
            let _ = writeln!(
                out,
                "<circle cx=\"{ox:.2}\" cy=\"{oy:.2}\" r=\"{:.2}\" fill=\"#dddddd\" stroke=\"black\" stroke-width=\"1.5\"/>",
                k.radius * frame.scale
            );
        }
        Some(Obstacle::Ellipse(e)) => {
            let (ox, oy) = frame.map(e.center);
            let _ = writeln!(
                out,
                "<ellipse cx=\"{ox:.2}\" cy=\"{oy:.2}\" rx=\"{:.2}\" ry=\"{:.2}\" fill=\"#dddddd\" stroke=\"black\" stroke-width=\"1.5\"/>",
                e.semi_axes[0] * frame.scale,
                e.semi_axes[1] * frame.scale
            );
        }
        None => {}
    }
}

/// Domain outline with one polyline per ray and a dot at every reflection.
pub fn rays(domain: &Domain, paths: &[Vec<[f64; 2]>], reflections: &[[f64; 2]]) -> String {
    let frame = Frame::for_domain(domain);
    let mut out = header(SIZE, SIZE);
    boundary(&mut out, &frame, domain);
    for (i, p) in paths.iter().enumerate() {
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"0.7\" stroke-opacity=\"0.8\"/>",
            polyline(&frame, p),
            PALETTE[i % PALETTE.len()]
        );
    }
    for r in reflections {
        let (x, y) = frame.map(*r);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"black\"/>");
    }
    out.push_str("</svg>\n");
    out
}

/// Blue-white-red diverging color for `t` in `[-1, 1]`.
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (1.0, 1.0 - t, 1.0 - t)
    } else {
        (1.0 + t, 1.0 + t, 1.0)
    };
    format!("#{:02x}{:02x}{:02x}", (255.0 * r).round() as u8, (255.0 * g).round() as u8, (255.0 * b).round() as u8)
}

/// One panel per component of node values on a polar grid, each cell an
/// annular sector colored on a symmetric scale.
pub fn polar_heatmap(domain: &Domain, grid: &PolarGrid, components: &[&[f64]], titles: &[String]) -> String {
    let frame = Frame::for_domain(domain);
    let panels = components.len().max(1);
    let mut out = header(SIZE * panels as f64, SIZE + 20.0);
    for (k, values) in components.iter().enumerate() {
        let scale = values.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { m });
        let _ = writeln!(out, "<g transform=\"translate({:.0},20)\">", SIZE * k as f64);
        let title = titles.get(k).map(String::as_str).unwrap_or("");
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"-5\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{title} (max |v| = {scale:.3e})</text>",
            SIZE / 2.0
        );
        for i in 0..grid.n_r.saturating_sub(1) {
            for j in 0..grid.n_ang {
                let v = 0.25
                    * (values[grid.index(i, j)]
                        + values[grid.index(i + 1, j)]
                        + values[grid.index(i, (j + 1) % grid.n_ang)]
                        + values[grid.index(i + 1, (j + 1) % grid.n_ang)]);
                let fill = if scale > 0.0 && v.is_finite() { diverging(v / scale) } else { "#ffffff".into() };
                let (r0, r1) = (grid.radius(i), grid.radius(i + 1));
                let (a0, a1) = (grid.angle(j), grid.angle(j) + 2.0 * PI / grid.n_ang as f64);
                let corner = |r: f64, a: f64| frame.map([grid.center[0] + r * a.cos(), grid.center[1] + r * a.sin()]);
                let pts = [corner(r0, a0), corner(r1, a0), corner(r1, a1), corner(r0, a1)];
                let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(out, "<polygon points=\"{}\" fill=\"{fill}\" stroke=\"none\"/>", d.join(" "));
            }
        }
        boundary(&mut out, &frame, domain);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Log-log plot of `(x, y)` series; nonpositive values are skipped.
pub fn loglog(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (520.0, 380.0, 60.0);
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|(x, y)| *x > 0.0 && *y > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let map = |x: f64, y: f64| {
        (m + (x.log10() - x0) / (x1 - x0) * (w - 1.5 * m), h - m - (y.log10() - y0) / (y1 - y0) * (h - 1.5 * m))
    };
    let mut out = header(w, h);
    let _ = writeln!(
        out,
        "<text x=\"{:.0}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{title}</text>",
        w / 2.0
    );
    let _ = writeln!(
        out,
        "<rect x=\"{m}\" y=\"{:.0}\" width=\"{:.0}\" height=\"{:.0}\" fill=\"none\" stroke=\"black\"/>",
        0.5 * m,
        w - 1.5 * m,
        h - 1.5 * m
    );
    for e in (y0 as i32)..=(y1 as i32) {
        let (_, y) = map(10f64.powi(x0 as i32), 10f64.powi(e));
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">1e{e}</text>",
            m - 4.0
        );
    }
    for e in (x0 as i32)..=(x1 as i32) {
        let (x, _) = map(10f64.powi(e), 10f64.powi(y0 as i32));
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">1e{e}</text>",
            h - m + 14.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x_label}</text>",
        w / 2.0,
        h - 12.0
    );
    for (i, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| {
                let (px, py) = map(*x, *y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"{color}\">{name}</text>",
            m + 8.0,
            0.5 * m + 14.0 + 12.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_are_closed_and_deterministic() {
        let d = Domain::annulus(2.0, 1.0);
        let a = rays(&d, &[vec![[2.0, 0.0], [1.0, 0.0], [2.0, 0.0]]], &[[1.0, 0.0]]);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a, rays(&d, &[vec![[2.0, 0.0], [1.0, 0.0], [2.0, 0.0]]], &[[1.0, 0.0]]));
        let g = PolarGrid::annulus(&d, 3, 4);
        let v = vec![1.0; g.n_nodes()];
        let h = polar_heatmap(&d, &g, &[&v], &["f".into()]);
        assert_eq!(h.matches("<polygon").count(), 8);
        let l = loglog("t", "n", &[("r".into(), vec![(32.0, 1e-3), (64.0, 2.5e-4)])]);
        assert!(l.contains("<polyline"));
    }

    #[test]
    fn diverging_scale_endpoints() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#ff0000");
        assert_eq!(diverging(-1.0), "#0000ff");
    }
}
