//! SVG stills of the stock-and-flow diagram and of CLDs at one time step.

use std::fmt::Write as _;

use thiserror::Error;

use crate::layout::{label_box, EdgeShape};
use crate::model::{Point, VariableKind};

use super::bundle::{AnalysisBundle, CldVariant};
use super::number::format_number;
use super::sfd::PIXELS_PER_UNIT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("time index {index} is outside 0..={steps}")]
    IndexOutOfRange { index: usize, steps: usize },
    #[error("no CLD variant {0}")]
    UnknownVariant(usize),
    #[error("invalid style: {0}")]
    InvalidStyle(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub min_width: f64,
    pub max_width: f64,
    pub positive_color: String,
    pub negative_color: String,
    pub zero_color: String,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            min_width: 1.0,
            max_width: 6.0,
            positive_color: "#1a9641".into(),
            negative_color: "#d7191c".into(),
            zero_color: "#9e9e9e".into(),
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.min_width > 0.0 && self.max_width >= self.min_width && self.max_width.is_finite() {
            Ok(())
        } else {
            Err(RenderError::InvalidStyle(format!(
                "need max width ({}) >= min width ({}) > 0",
                self.max_width, self.min_width
            )))
        }
    }

    /// Stroke width for a relative score: linear in its magnitude.
    pub fn width(&self, value: f64) -> f64 {
        self.min_width + (self.max_width - self.min_width) * value.abs().min(1.0)
    }
}

/// Style class for a score's sign.
pub fn polarity_class(value: f64) -> &'static str {
    if value > 0.0 {
        "pos"
    } else if value < 0.0 {
        "neg"
    } else {
        "zero"
    }
}

/// Score describing the arrival at time index `t_index`; zero at the start.
pub fn score_at(series: &[f64], t_index: usize) -> f64 {
    match t_index {
        0 => 0.0,
        k => series.get(k - 1).copied().unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagram {
    Sfd,
    FullCld,
    /// Index into the bundle's precomputed simplified variants.
    Variant(usize),
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(v: f64) -> String {
    // two decimals is far below a pixel; keeps files small
    format_number((v * 100.0).round() / 100.0)
}

/// Distance from a node center to the edge of its half-extent box along
/// the unit direction `(ux, uy)`.
fn box_exit(half: (f64, f64), ux: f64, uy: f64) -> f64 {
    let tx = if ux.abs() < 1e-12 { f64::INFINITY } else { half.0 / ux.abs() };
    let ty = if uy.abs() < 1e-12 { f64::INFINITY } else { half.1 / uy.abs() };
    tx.min(ty) + 3.0
}

/// SVG path data for one edge, trimmed so it starts and ends at the node
/// boxes.
fn edge_path(ps: Point, pt: Point, shape: &EdgeShape, half_s: (f64, f64), half_t: (f64, f64)) -> String {
    let (dx, dy) = (pt.x - ps.x, pt.y - ps.y);
    let chord = dx.hypot(dy);
    if chord < 1e-9 {
        return format!("M {} {}", num(ps.x), num(ps.y));
    }
    let (ux, uy) = (dx / chord, dy / chord);
    let (trim_s, trim_t) = (box_exit(half_s, ux, uy), box_exit(half_t, ux, uy));
    match *shape {
        EdgeShape::Arc { center, radius, sweep } => {
            let angle = |p: Point| (p.y - center.y).atan2(p.x - center.x);
            let (a_s, a_t) = (angle(ps), angle(pt));
            let dot = ((ps.x - center.x) * (pt.x - center.x) + (ps.y - center.y) * (pt.y - center.y)) / (radius * radius);
            let span = dot.clamp(-1.0, 1.0).acos();
            let (th_s, th_t) = (trim_s / radius, trim_t / radius);
            let dir = f64::from(sweep);
            let (a_s, a_t) = if th_s + th_t < span * 0.8 {
                (a_s + dir * th_s, a_t - dir * th_t)
            } else {
                (a_s, a_t)
            };
            let at = |a: f64| Point::new(center.x + radius * a.cos(), center.y + radius * a.sin());
            let (s, t) = (at(a_s), at(a_t));
            format!(
                "M {} {} A {} {} 0 0 {} {} {}",
                num(s.x),
                num(s.y),
                num(radius),
                num(radius),
                if sweep > 0 { 1 } else { 0 },
                num(t.x),
                num(t.y)
            )
        }
        EdgeShape::PairedArc { offset } => {
            let (nx, ny) = (-uy, ux);
            let ctrl = Point::new((ps.x + pt.x) / 2.0 + 2.0 * offset * nx, (ps.y + pt.y) / 2.0 + 2.0 * offset * ny);
            let toward = |from: Point, to: Point, d: f64| {
                let l = (to.x - from.x).hypot(to.y - from.y).max(1e-9);
                Point::new(from.x + (to.x - from.x) / l * d, from.y + (to.y - from.y) / l * d)
            };
            let (s, t) = if trim_s + trim_t < chord * 0.8 {
                (toward(ps, ctrl, trim_s), toward(pt, ctrl, trim_t))
            } else {
                (ps, pt)
            };
            format!("M {} {} Q {} {} {} {}", num(s.x), num(s.y), num(ctrl.x), num(ctrl.y), num(t.x), num(t.y))
        }
        EdgeShape::Straight => {
            let (s, t) = if trim_s + trim_t < chord * 0.8 {
                (
                    Point::new(ps.x + ux * trim_s, ps.y + uy * trim_s),
                    Point::new(pt.x - ux * trim_t, pt.y - uy * trim_t),
                )
            } else {
                (ps, pt)
            };
            format!("M {} {} L {} {}", num(s.x), num(s.y), num(t.x), num(t.y))
        }
    }
}

fn header(out: &mut String, width: f64, height: f64, title: &str, style: &RenderStyle) {
    let _ = write!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<title>{title}</title>
<style>
.pos {{ stroke: {pos}; }} .neg {{ stroke: {neg}; }} .zero {{ stroke: {zero}; }}
.head.pos {{ fill: {pos}; }} .head.neg {{ fill: {neg}; }} .head.zero {{ fill: {zero}; }}
.link, .flow-half {{ fill: none; }}
.stock {{ fill: #ffffff; stroke: #333333; stroke-width: 1.5; }}
.valve, .cloud {{ fill: #ffffff; stroke: #333333; }}
.aux {{ fill: #333333; }}
text {{ font-family: sans-serif; font-size: 11px; text-anchor: middle; dominant-baseline: middle; }}
.loop-label {{ font-weight: bold; font-size: 13px; fill: #555555; }}
</style>
<defs>
"#,
        w = num(width),
        h = num(height),
        title = escape(title),
        pos = style.positive_color,
        neg = style.negative_color,
        zero = style.zero_color,
    );
    for class in ["pos", "neg", "zero"] {
        let _ = writeln!(
            out,
            r#"<marker id="arrow-{class}" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto"><path class="head {class}" d="M 0 0 L 10 5 L 0 10 z"/></marker>"#
        );
    }
    out.push_str("</defs>\n");
}

fn link_element(out: &mut String, d: &str, value: f64, style: &RenderStyle, class: &str, data: &str) {
    let pol = polarity_class(value);
    let _ = writeln!(
        out,
        r#"<path class="{class} {pol}" d="{d}" stroke-width="{}" marker-end="url(#arrow-{pol})" {data}/>"#,
        num(style.width(value)),
    );
}

fn loop_labels<'a>(out: &mut String, labels: impl Iterator<Item = (&'a str, Vec<Point>)>) {
    out.push_str("<g class=\"loops\">\n");
    for (id, points) in labels {
        if points.is_empty() {
            continue;
        }
        let n = points.len() as f64;
        let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
        let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
        let _ = writeln!(out, r#"<text class="loop-label" x="{}" y="{}">{}</text>"#, num(cx), num(cy), escape(id));
    }
    out.push_str("</g>\n");
}

fn check_index(bundle: &AnalysisBundle, t_index: usize) -> Result<(), RenderError> {
    let steps = bundle.steps();
    if t_index > steps {
        Err(RenderError::IndexOutOfRange { index: t_index, steps })
    } else {
        Ok(())
    }
}

const STOCK_HALF: (f64, f64) = (40.0, 20.0);
const SMALL_HALF: (f64, f64) = (8.0, 8.0);

fn render_sfd(bundle: &AnalysisBundle, t_index: usize, style: &RenderStyle) -> String {
    let sfd = &bundle.sfd;
    let kind_of = |name: &str| sfd.nodes.iter().find(|n| n.name == name).map(|n| n.kind);
    let half = |name: &str| match kind_of(name) {
        Some(VariableKind::Stock) => STOCK_HALF,
        _ => SMALL_HALF,
    };
    let relative = |edge: usize| bundle.links.get(edge).map_or(0.0, |l| score_at(&l.relative, t_index));
    let mut out = String::new();
    let title = format!("{} stock and flow diagram, t = {}", model_title(bundle), format_number(bundle.times[t_index]));
    header(&mut out, sfd.width, sfd.height, &title, style);

    out.push_str("<g class=\"flows\">\n");
    for f in &sfd.flows {
        // each half of the pipe takes the score of the stock it touches;
        // a half ending in a cloud mirrors the other half
        let from_value = f.from.edge.or(f.to.edge).map_or(0.0, relative);
        let to_value = f.to.edge.or(f.from.edge).map_or(0.0, relative);
        let trim = |end: &super::sfd::FlowEnd, toward: Point| {
            let h = if end.stock.is_some() { STOCK_HALF } else { (10.0, 10.0) };
            let (dx, dy) = (toward.x - end.point.x, toward.y - end.point.y);
            let l = dx.hypot(dy);
            if l < 1e-9 {
                return end.point;
            }
            let d = box_exit(h, dx / l, dy / l).min(l);
            Point::new(end.point.x + dx / l * d, end.point.y + dy / l * d)
        };
        let a = trim(&f.from, f.valve);
        let b = trim(&f.to, f.valve);
        let data = format!(r#"data-flow="{}""#, escape(&f.flow));
        let pol = polarity_class(from_value);
        let _ = writeln!(
            out,
            r#"<path class="flow-half {pol}" d="M {} {} L {} {}" stroke-width="{}" {data} data-half="from"/>"#,
            num(a.x),
            num(a.y),
            num(f.valve.x),
            num(f.valve.y),
            num(style.width(from_value)),
        );
        let d = format!("M {} {} L {} {}", num(f.valve.x), num(f.valve.y), num(b.x), num(b.y));
        link_element(&mut out, &d, to_value, style, "flow-half", &format!(r#"{data} data-half="to""#));
        for end in [&f.from, &f.to] {
            if end.stock.is_none() {
                let _ = writeln!(out, r#"<circle class="cloud" cx="{}" cy="{}" r="10"/>"#, num(end.point.x), num(end.point.y));
            }
        }
    }
    out.push_str("</g>\n<g class=\"links\">\n");
    for c in &sfd.connectors {
        let (Some(ps), Some(pt)) = (sfd.position(&c.source), sfd.position(&c.target)) else {
            continue;
        };
        let d = edge_path(ps, pt, &c.shape, half(&c.source), half(&c.target));
        let data = format!(r#"data-source="{}" data-target="{}""#, escape(&c.source), escape(&c.target));
        link_element(&mut out, &d, relative(c.edge), style, "link", &data);
    }
    out.push_str("</g>\n<g class=\"nodes\">\n");
    for n in &sfd.nodes {
        let p = n.position;
        let label = escape(&n.name);
        match n.kind {
            VariableKind::Stock => {
                let _ = writeln!(
                    out,
                    r#"<rect class="stock" x="{}" y="{}" width="{}" height="{}"/><text x="{}" y="{}">{label}</text>"#,
                    num(p.x - STOCK_HALF.0),
                    num(p.y - STOCK_HALF.1),
                    num(2.0 * STOCK_HALF.0),
                    num(2.0 * STOCK_HALF.1),
                    num(p.x),
                    num(p.y),
                );
            }
            VariableKind::Flow => {
                let _ = writeln!(
                    out,
                    r#"<circle class="valve" cx="{}" cy="{}" r="7"/><text x="{}" y="{}">{label}</text>"#,
                    num(p.x),
                    num(p.y),
                    num(p.x),
                    num(p.y + 18.0),
                );
            }
            VariableKind::Aux | VariableKind::Constant => {
                let _ = writeln!(
                    out,
                    r#"<circle class="aux" cx="{}" cy="{}" r="4"/><text x="{}" y="{}">{label}</text>"#,
                    num(p.x),
                    num(p.y),
                    num(p.x),
                    num(p.y + 14.0),
                );
            }
        }
    }
    out.push_str("</g>\n");
    loop_labels(
        &mut out,
        bundle
            .loops
            .iter()
            .map(|l| (l.id.as_str(), l.nodes.iter().filter_map(|n| sfd.position(n)).collect())),
    );
    out.push_str("</svg>\n");
    out
}

fn model_title(bundle: &AnalysisBundle) -> String {
    if bundle.model.name.is_empty() {
        "model".to_string()
    } else {
        bundle.model.name.clone()
    }
}

fn render_cld(bundle: &AnalysisBundle, v: &CldVariant, t_index: usize, style: &RenderStyle) -> String {
    let layout = &v.layout;
    let pos = |name: &str| layout.position(name);
    let half = |name: &str| {
        let b = label_box(name);
        (b.width / 2.0 * PIXELS_PER_UNIT, b.height / 2.0 * PIXELS_PER_UNIT)
    };
    let mut out = String::new();
    let title = format!(
        "{} causal loop diagram (link threshold {}, loop threshold {}), t = {}",
        model_title(bundle),
        format_number(v.link_threshold),
        format_number(v.loop_threshold),
        format_number(bundle.times[t_index])
    );
    header(&mut out, v.width, v.height, &title, style);
    out.push_str("<g class=\"links\">\n");
    for e in &layout.edges {
        let (source, target) = (&layout.nodes[e.source], &layout.nodes[e.target]);
        let value = v
            .links
            .iter()
            .find(|l| &l.source == source && &l.target == target)
            .map_or(0.0, |l| score_at(&l.composite_scores, t_index));
        let d = edge_path(
            layout.positions[e.source],
            layout.positions[e.target],
            &e.shape,
            half(source),
            half(target),
        );
        let data = format!(r#"data-source="{}" data-target="{}""#, escape(source), escape(target));
        link_element(&mut out, &d, value, style, "link", &data);
    }
    out.push_str("</g>\n<g class=\"nodes\">\n");
    for (name, p) in layout.nodes.iter().zip(&layout.positions) {
        let _ = writeln!(out, r#"<text class="variable" x="{}" y="{}">{}</text>"#, num(p.x), num(p.y), escape(name));
    }
    out.push_str("</g>\n");
    loop_labels(
        &mut out,
        v.retained_loops.iter().filter_map(|id| {
            let l = bundle.loop_info(id)?;
            Some((l.id.as_str(), l.nodes.iter().filter_map(|n| pos(n)).collect()))
        }),
    );
    out.push_str("</svg>\n");
    out
}

/// Draws `diagram` with link widths and colors taken from the scores at
/// time index `t_index` (0 is the initial time, where nothing has changed).
pub fn render_svg(bundle: &AnalysisBundle, diagram: Diagram, t_index: usize, style: &RenderStyle) -> Result<String, RenderError> {
    style.validate()?;
    check_index(bundle, t_index)?;
    Ok(match diagram {
        Diagram::Sfd => render_sfd(bundle, t_index, style),
        Diagram::FullCld => render_cld(bundle, &bundle.cld.full, t_index, style),
        Diagram::Variant(i) => {
            let v = bundle.cld.variants.get(i).ok_or(RenderError::UnknownVariant(i))?;
            render_cld(bundle, v, t_index, style)
        }
    })
}
