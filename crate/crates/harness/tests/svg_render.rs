use pinning_harness::svg::{render_svg, Glyph, Layer, Plot, Style, SvgError};

#[test]
fn empty_plot_is_rejected() {
    assert_eq!(render_svg(&Plot::default(), &Style::default()), Err(SvgError::Empty));
    let hollow = Plot { layers: vec![Layer::Line { label: "x".into(), points: vec![] }], ..Plot::default() };
    assert_eq!(render_svg(&hollow, &Style::default()), Err(SvgError::Empty));
}

#[test]
fn glyph_classes_and_escaping() {
    let plot = Plot {
        title: "a < b & c".into(),
        layers: vec![
            Layer::Line { label: "v".into(), points: vec![(0.0, 0.0), (1.0, 2.0)] },
            Layer::Points { label: "plus".into(), glyph: Glyph::Positive, points: vec![(0.5, 1.0)] },
            Layer::Points { label: "minus".into(), glyph: Glyph::Negative, points: vec![(0.2, 0.1)] },
        ],
        ..Plot::default()
    };
    let svg = render_svg(&plot, &Style::default()).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(r#"class="pos""#) && svg.contains(r#"class="neg""#));
    assert!(svg.contains("a &lt; b &amp; c"));
    assert!(!svg.contains("generated"));
    let stamped = render_svg(&plot, &Style { timestamp: Some("2026-01-01".into()), ..Style::default() }).unwrap();
    assert!(stamped.contains("<!-- generated 2026-01-01 -->"));
}

#[test]
fn non_finite_points_are_rejected() {
    let plot = Plot { layers: vec![Layer::Line { label: "bad".into(), points: vec![(0.0, f64::NAN)] }], ..Plot::default() };
    assert_eq!(render_svg(&plot, &Style::default()), Err(SvgError::NonFinite("bad".into())));
}

#[test]
fn single_point_renders() {
    let plot = Plot { layers: vec![Layer::Points { label: "p".into(), glyph: Glyph::Dot, points: vec![(3.0, 3.0)] }], ..Plot::default() };
    let svg = render_svg(&plot, &Style::default()).unwrap();
    assert!(svg.contains("<circle"));
}
