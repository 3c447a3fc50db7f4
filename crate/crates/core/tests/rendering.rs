use loopx_core::export::{render_svg, AnalysisBundle, BundleOptions, Diagram, RenderError, RenderStyle};
use loopx_core::loops::DEFAULT_LOOP_CAP;
use loopx_core::model::parse_xmile;
use loopx_core::analyze;

fn bundle_for(text: &str) -> AnalysisBundle {
    let analysis = analyze(parse_xmile(text).unwrap(), DEFAULT_LOOP_CAP).unwrap();
    AnalysisBundle::build(&analysis, &BundleOptions::default()).unwrap()
}

fn bass() -> AnalysisBundle {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/bass.xmile");
    bundle_for(&std::fs::read_to_string(path).unwrap())
}

struct Stroke {
    class: String,
    width: f64,
    attrs: Vec<(String, String)>,
}

fn strokes(svg: &str) -> Vec<Stroke> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("path") && n.attribute("stroke-width").is_some())
        .map(|n| Stroke {
            class: n.attribute("class").unwrap_or_default().to_string(),
            width: n.attribute("stroke-width").unwrap().parse().unwrap(),
            attrs: n.attributes().map(|a| (a.name().to_string(), a.value().to_string())).collect(),
        })
        .collect()
}

fn attr<'a>(s: &'a Stroke, name: &str) -> Option<&'a str> {
    s.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
}

#[test]
fn split_flow_takes_each_stock_polarity() {
    let b = bass();
    let svg = render_svg(&b, Diagram::Sfd, b.steps(), &RenderStyle::default()).unwrap();
    let halves: Vec<Stroke> = strokes(&svg).into_iter().filter(|s| s.class.starts_with("flow-half")).collect();
    assert_eq!(halves.len(), 2);
    let from = halves.iter().find(|s| attr(s, "data-half") == Some("from")).unwrap();
    let to = halves.iter().find(|s| attr(s, "data-half") == Some("to")).unwrap();
    assert_eq!(from.class, "flow-half neg");
    assert_eq!(to.class, "flow-half pos");
    assert!(svg.contains("#d7191c") && svg.contains("#1a9641"));
}

#[test]
fn initial_step_draws_everything_at_min_width() {
    let b = bass();
    let style = RenderStyle::default();
    for diagram in [Diagram::Sfd, Diagram::FullCld] {
        let svg = render_svg(&b, diagram, 0, &style).unwrap();
        let all = strokes(&svg);
        assert!(!all.is_empty());
        for s in all {
            assert_eq!(s.width, style.min_width, "{diagram:?} {}", s.class);
            assert!(s.class.ends_with("zero"));
        }
    }
}

#[test]
fn single_positive_link_is_green_at_max_width() {
    let b = bundle_for(
        r#"<?xml version="1.0" encoding="utf-8"?>
<xmile version="1.0" xmlns="http://docs.oasis-open.org/xmile/ns/XMILE/v1.0">
  <sim_specs method="Euler"><start>0</start><stop>1</stop><dt>0.25</dt></sim_specs>
  <model><variables>
    <stock name="s"><eqn>0</eqn><inflow>f</inflow></stock>
    <flow name="f"><eqn>a</eqn></flow>
    <aux name="a"><eqn>TIME + 1</eqn></aux>
  </variables></model>
</xmile>"#,
    );
    let style = RenderStyle::default();
    let svg = render_svg(&b, Diagram::FullCld, b.steps(), &style).unwrap();
    let links = strokes(&svg);
    assert_eq!(links.len(), 1);
    assert_eq!(links[0].class, "link pos");
    assert_eq!(links[0].width, style.max_width);
    assert_eq!(attr(&links[0], "data-source"), Some("f"));
    assert_eq!(attr(&links[0], "data-target"), Some("s"));
}

#[test]
fn out_of_range_step_and_variant() {
    let b = bass();
    let style = RenderStyle::default();
    assert!(matches!(
        render_svg(&b, Diagram::Sfd, b.steps() + 1, &style),
        Err(RenderError::IndexOutOfRange { .. })
    ));
    assert!(matches!(render_svg(&b, Diagram::Variant(0), 0, &style), Err(RenderError::UnknownVariant(0))));
}

#[test]
fn loop_labels_are_drawn() {
    let b = bass();
    let svg = render_svg(&b, Diagram::FullCld, 10, &RenderStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let mut labels: Vec<&str> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("loop-label"))
        .filter_map(|n| n.text())
        .collect();
    labels.sort();
    assert_eq!(labels, vec!["B1", "R1"]);
}
