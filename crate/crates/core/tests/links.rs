use std::collections::BTreeMap;

use planeflow::fields::{gradient, ScalarField, VectorField};
use planeflow::geometry::{Chart, OneForm};
use planeflow::links::{
    linking_matrix, trace_link, ClassifyOptions, ContinuationOptions, EventKind, PointTag,
};

fn no_params() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

#[test]
fn s3_gradient_link_is_hopf_link() {
    let psi = ScalarField::parse("0.5*(x1^2+x2^2) - 0.5*(x3^2+x4^2)", &Chart::Sphere, &no_params()).unwrap();
    let x = gradient(&psi, &Chart::Sphere);
    let link = trace_link::<f64>(&x, None, &ContinuationOptions { grid: 6, ..Default::default() }, &ClassifyOptions::default()).unwrap();
    assert_eq!(link.curves.len(), 2);
    for c in &link.curves {
        assert!(c.closed);
        assert!((c.length() - std::f64::consts::TAU).abs() < 1e-3, "{}", c.length());
        assert!(c.events.is_empty());
        for s in &c.samples {
            let n: f64 = x.eval(s).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 1e-9);
        }
        assert!(c.sv_ratio.iter().all(|&r| r <= 1e-5));
    }
    let tags: Vec<_> = link.curves.iter().map(|c| c.tags[0]).collect();
    assert!(tags.contains(&PointTag::Sink) && tags.contains(&PointTag::Source));
    let lk = linking_matrix(&link).unwrap();
    assert_eq!(lk[0].2.value.abs(), 1);
}

#[test]
fn saddle_node_curve_and_event() {
    let chart = Chart::new_box([[-1.0, 1.0], [-1.0, 1.0], [-0.5, 1.5]]).unwrap();
    let x = VectorField::parse(chart.clone(), &["-x", "z - y^2", "-y*(z - y^2)"], &no_params()).unwrap();
    let form = OneForm::parse(chart, &["0", "y", "1"], &no_params()).unwrap();
    let link = trace_link::<f64>(&x, Some(&form), &ContinuationOptions::default(), &ClassifyOptions::default()).unwrap();
    assert_eq!(link.curves.len(), 1);
    let c = &link.curves[0];
    assert!(!c.closed);
    for s in &c.samples {
        assert!(s[0].abs() < 1e-9 && (s[2] - s[1] * s[1]).abs() < 1e-9);
    }
    let ev: Vec<_> = c.events.iter().collect();
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].kind, EventKind::SaddleNode);
    assert!(ev[0].location.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-4);
    assert!(ev[0].tangent_angle.unwrap() < 1e-3);
}

#[test]
fn hopf_curve_and_event() {
    let chart = Chart::new_box([[-1.0, 1.0], [-1.0, 1.0], [-0.5, 0.5]]).unwrap();
    let f1 = "z*x - y - x*(x^2+y^2)";
    let f2 = "x + z*y - y*(x^2+y^2)";
    let f3 = format!("-y*({f2})");
    let x = VectorField::parse(chart.clone(), &[f1, f2, &f3], &no_params()).unwrap();
    let form = OneForm::parse(chart, &["0", "y", "1"], &no_params()).unwrap();
    let link = trace_link::<f64>(&x, Some(&form), &ContinuationOptions::default(), &ClassifyOptions::default()).unwrap();
    let c = &link.curves[0];
    assert_eq!(link.curves.len(), 1);
    assert_eq!(c.events.len(), 1);
    assert_eq!(c.events[0].kind, EventKind::Hopf);
    assert!(c.events[0].location[2].abs() <= 1e-6);
}
