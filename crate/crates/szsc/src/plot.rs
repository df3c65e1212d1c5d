//! Minimal SVG rendering of risk-coverage curves.

use std::fmt::Write as _;

use szsc_core::RiskCoverageCurve;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Step plot of one or more labelled curves on coverage × risk axes.
pub fn rcc_svg(curves: &[(&str, &RiskCoverageCurve)]) -> String {
    let max_risk = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.risk))
        .fold(0.0_f64, f64::max)
        .max(1e-3);
    let x = |c: f64| PAD + c * (W - 2.0 * PAD);
    let y = |r: f64| H - PAD - r / max_risk * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#,
        x0 = x(0.0),
        x1 = x(1.0),
        y0 = y(0.0),
        y1 = y(max_risk)
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">coverage</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">risk</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{max_risk:.3}</text>"#, PAD - 4.0, y(max_risk) + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, PAD - 4.0, y(0.0) + 4.0);
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = format!("M{} {}", x(0.0), y(curve.points.first().map_or(0.0, |p| p.risk)));
        let mut prev = 0.0;
        for p in &curve.points {
            let _ = write!(d, " L{} {} L{} {}", x(prev), y(p.risk), x(p.coverage), y(p.risk));
            prev = p.coverage;
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{} (AURCC {:.4})</text>"#,
            PAD + 8.0,
            PAD + 14.0 * (i as f64 + 1.0),
            escape(label),
            curve.aurcc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
