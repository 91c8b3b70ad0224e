//! Minimal hand-rolled SVG line chart: one polyline per gamma over the sigma
//! grid. No external renderer; the CSV stays the contract and this is a
//! quick-look companion.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Render curves of (sigma, ln N) points; `None` marks a failed point and
/// breaks the line there.
pub fn line_chart(sigmas: &[f64], curves: &[(f64, Vec<Option<f64>>)], title: &str) -> String {
    let xs = (sigmas.first().copied().unwrap_or(0.0), sigmas.last().copied().unwrap_or(1.0));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, ys) in curves {
        for y in ys.iter().flatten() {
            lo = lo.min(*y);
            hi = hi.max(*y);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - xs.0) / (xs.1 - xs.0).max(1e-12) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - lo) / (hi - lo) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        W / 2.0,
        escape(title)
    );

    // Axes with five ticks each.
    let _ = writeln!(
        out,
        "<path d=\"M {m} {m} L {m} {b} L {r} {b}\" stroke=\"black\" fill=\"none\"/>",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for k in 0..=4 {
        let fx = xs.0 + (xs.1 - xs.0) * k as f64 / 4.0;
        let fy = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.2}</text>",
            sx(fx),
            H - MARGIN + 18.0,
            fx
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>",
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">sigma</text>",
        W / 2.0,
        H - 16.0
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">ln N</text>",
        H / 2.0,
        H / 2.0
    );

    for (c, (gamma, ys)) in curves.iter().enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        let mut segment = String::new();
        let flush = |seg: &mut String, out: &mut String| {
            if seg.matches(' ').count() >= 2 {
                let _ = writeln!(
                    out,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                    seg.trim_end()
                );
            }
            seg.clear();
        };
        for (k, y) in ys.iter().enumerate() {
            match y {
                Some(y) => {
                    let _ = write!(segment, "{:.2},{:.2} ", sx(sigmas[k]), sy(*y));
                }
                None => flush(&mut segment, &mut out),
            }
        }
        flush(&mut segment, &mut out);
        let ly = 40.0 + 16.0 * c as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{ly}\" x2=\"{x2}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\
             <text x=\"{tx}\" y=\"{ty}\">gamma = {gamma}</text>",
            x = W - MARGIN - 130.0,
            x2 = W - MARGIN - 110.0,
            tx = W - MARGIN - 104.0,
            ty = ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
