//! Plain SVG figures. Points are projected on their first two coordinates.

use std::fmt::Write;

use crate::asymptotics::ScalingReport;
use crate::network::{NodeKind, TransportNetwork};
use crate::point::Point;
use crate::quantizer::Quantizer;

const SIZE: f64 = 640.0;
const PAD: f64 = 24.0;

/// Maps data coordinates into the drawing square, y up.
struct Frame {
    lo: [f64; 2],
    span: f64,
}

impl Frame {
    fn fit<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Frame {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p.0[k]);
                hi[k] = hi[k].max(p.0[k]);
            }
        }
        if !lo[0].is_finite() {
            return Frame { lo: [0.0, 0.0], span: 1.0 };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let span = if span > 0.0 { span } else { 1.0 };
        let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        Frame { lo: [mid[0] - span / 2.0, mid[1] - span / 2.0], span }
    }

    fn map(&self, p: &Point) -> (f64, f64) {
        let s = (SIZE - 2.0 * PAD) / self.span;
        (PAD + (p.0[0] - self.lo[0]) * s, SIZE - PAD - (p.0[1] - self.lo[1]) * s)
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

/// Distinct hue per index.
fn color(i: usize) -> String {
    let hue = (i as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},70%,45%)")
}

fn draw_network(out: &mut String, net: &TransportNetwork, frame: &Frame, stroke: &str, sinks: bool) {
    let max_w = net.flows().iter().map(|f| f.powf(net.alpha())).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for (e, edge) in net.topology().edges().iter().enumerate() {
        let (x1, y1) = frame.map(&net.position(edge.parent));
        let (x2, y2) = frame.map(&net.position(edge.child));
        let w = 0.5 + 5.5 * net.flows()[e].powf(net.alpha()) / max_w;
        let _ = writeln!(
            out,
            r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{stroke}" stroke-width="{w:.3}" stroke-linecap="round"/>"#
        );
    }
    for v in 0..net.topology().len() {
        let (x, y) = frame.map(&net.position(v));
        match net.topology().kind(v) {
            NodeKind::Source => {
                let _ = writeln!(out, r#"<rect x="{:.3}" y="{:.3}" width="8" height="8" fill="black"/>"#, x - 4.0, y - 4.0);
            }
            NodeKind::Sink if sinks => {
                let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5" fill="{stroke}"/>"#);
            }
            _ => {}
        }
    }
}

pub fn network_svg(net: &TransportNetwork) -> String {
    let frame = Frame::fit(net.positions());
    let mut out = String::new();
    header(&mut out);
    draw_network(&mut out, net, &frame, "#1f4e79", true);
    out.push_str("</svg>\n");
    out
}

/// Sinks colored by basin, with every basin network.
pub fn quantizer_svg(q: &Quantizer) -> String {
    let frame = Frame::fit(q.networks().iter().flat_map(|n| n.positions()));
    let mut out = String::new();
    header(&mut out);
    for (i, net) in q.networks().iter().enumerate() {
        let c = color(i);
        for v in net.topology().sinks() {
            let (x, y) = frame.map(&net.position(v));
            let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2" fill="{c}" fill-opacity="0.6"/>"#);
        }
    }
    for (i, net) in q.networks().iter().enumerate() {
        draw_network(&mut out, net, &frame, &color(i), false);
    }
    out.push_str("</svg>\n");
    out
}

/// Log-log plot of the sweep points with the fitted line.
pub fn loglog_svg(report: &ScalingReport) -> String {
    let pts: Vec<Point> = report.points.iter().map(|&(n, c)| Point::xy((n as f64).ln(), c.ln())).collect();
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0[0]), b.max(p.0[0])));
    let line = [
        Point::xy(x0, report.fitted_intercept + report.fitted_slope * x0),
        Point::xy(x1, report.fitted_intercept + report.fitted_slope * x1),
    ];
    let frame = Frame::fit(pts.iter().chain(line.iter()));
    let mut out = String::new();
    header(&mut out);
    let (a, b) = (frame.map(&line[0]), frame.map(&line[1]));
    let _ = writeln!(
        out,
        r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="gray" stroke-dasharray="6 4"/>"#,
        a.0, a.1, b.0, b.1
    );
    for p in &pts {
        let (x, y) = frame.map(p);
        let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="black"/>"#);
    }
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{PAD}" font-family="monospace" font-size="14">log cost vs log N: slope {:.4}, r² {:.4}</text>"#,
        report.fitted_slope, report.r_squared
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::scaling_fit;

    #[test]
    fn loglog_is_deterministic() {
        let r = scaling_fit(&[(1, 1.0), (2, 0.8), (4, 0.6)], 0.85, 2).unwrap();
        let a = loglog_svg(&r);
        assert_eq!(a, loglog_svg(&r));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 3);
    }
}
