//! Batch pipelines behind the command-line front end. Each returns a
//! [`Report`] with a JSON document and, where meaningful, CSV and SVG
//! renderings of the same data.

use num_complex::Complex;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fields::{integrate, Monitor, Trajectory};
use crate::geometry::{frobenius_density, hopf_grid, Chart};
use crate::handles::{self, KnotExpr, Rhd};
use crate::links::{linking_matrix, trace_link, BifurcationEvent, FixedPointCurve, SingularLink};
use crate::linalg::norm;
use crate::output::{Plot, Polyline};
use crate::scene::Scene;
use crate::surfaces::{char_foliation, limit_cycles, return_map, surface_transversality};

#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub csv: Option<String>,
    pub svg: Option<String>,
}

impl Report {
    fn json(json: Value) -> Self {
        Self {
            json,
            csv: None,
            svg: None,
        }
    }
}

/// Coordinate pair used for SVG projections.
pub fn default_axes(chart: &Chart) -> [usize; 2] {
    match chart {
        Chart::Box { .. } => [0, 1],
        Chart::Sphere => [0, 2],
    }
}

fn project(p: &[f64], axes: [usize; 2]) -> [f64; 2] {
    [p[axes[0]], p[axes[1]]]
}

fn pair(c: Complex<f64>) -> [f64; 2] {
    [c.re, c.im]
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is UTF-8")
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn coord_header(chart: &Chart) -> Vec<String> {
    chart.coord_names().iter().map(|s| s.to_string()).collect()
}

fn scene_name(scene: &Scene) -> Value {
    json!(scene.name)
}

// ---------------------------------------------------------------- simulate

fn trajectory_json(start: &[f64], t: &Trajectory) -> Value {
    json!({
        "start": start,
        "stats": t.stats,
        "samples": t.rows(),
    })
}

/// Integrates the scene field from every start point.
pub fn simulate(scene: &Scene, axes: [usize; 2]) -> Result<Report> {
    if scene.starts.is_empty() {
        return Err(Error::BadParams("scene has no `starts`".into()));
    }
    let opts = scene.tolerances.integrate();
    let monitor = Monitor {
        form: Some(&scene.one_form),
        potential: scene.potential.as_ref(),
    };
    let mut trajs = Vec::new();
    for s in &scene.starts {
        trajs.push(integrate(&scene.field, s, scene.duration, &opts, monitor)?);
    }
    let json = json!({
        "command": "simulate",
        "scene": scene_name(scene),
        "duration": scene.duration,
        "trajectories": scene.starts.iter().zip(&trajs).map(|(s, t)| trajectory_json(s, t)).collect::<Vec<_>>(),
    });
    let mut header = vec!["trajectory".to_string(), "t".to_string()];
    header.extend(coord_header(&scene.chart));
    let rows: Vec<Vec<String>> = trajs
        .iter()
        .enumerate()
        .flat_map(|(k, t)| {
            t.rows()
                .into_iter()
                .map(move |r| std::iter::once(k.to_string()).chain(r.into_iter().map(num)).collect())
        })
        .collect();
    let names = scene.chart.coord_names();
    let mut plot = Plot::new("trajectories", names[axes[0]], names[axes[1]]);
    for t in &trajs {
        plot.lines.push(Polyline {
            points: t.samples.iter().map(|(_, p)| project(p, axes)).collect(),
            closed: false,
            class: "curve".into(),
        });
        plot.markers.push((project(&t.samples[0].1, axes), "event".into()));
    }
    Ok(Report {
        json,
        csv: Some(csv_text(&header, &rows)),
        svg: Some(plot.to_svg()),
    })
}

// ------------------------------------------------------------------- links

fn event_json(e: &BifurcationEvent<f64>) -> Value {
    json!({
        "kind": e.kind,
        "location": e.location,
        "eigenvalues": e.eigenvalues.map(pair),
        "crossing": pair(e.crossing),
        "tangent_angle": e.tangent_angle,
        "segment": e.segment,
    })
}

fn curve_json(scene: &Scene, c: &FixedPointCurve<f64>) -> Value {
    let residual = c
        .samples
        .iter()
        .map(|p| norm(&scene.field.eval::<f64>(p)))
        .fold(0.0, f64::max);
    let sv_max = c.sv_ratio.iter().copied().fold(0.0, f64::max);
    json!({
        "closed": c.closed,
        "length": c.length(),
        "step": c.step,
        "samples": c.samples,
        "max_residual": residual,
        "max_sv_ratio": sv_max,
        "spectra": c.spectra.iter().map(|s| s.map(|p| p.map(pair))).collect::<Vec<_>>(),
        "tags": c.tags,
        "events": c.events.iter().map(event_json).collect::<Vec<_>>(),
        "nondegenerate": c.nondegenerate,
    })
}

/// Traces and classifies the singular link of the scene field.
pub fn links(scene: &Scene, axes: [usize; 2]) -> Result<(SingularLink<f64>, Report)> {
    let copts = scene.tolerances.continuation();
    let opts = scene.tolerances.classify();
    let link = trace_link(&scene.field, Some(&scene.one_form), &copts, &opts)?;
    let all_closed = link.curves.len() >= 2 && link.curves.iter().all(|c| c.closed);
    let matrix = if all_closed { linking_matrix(&link)? } else { Vec::new() };
    let events: Vec<Value> = link
        .curves
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            c.events.iter().map(move |e| {
                let mut v = event_json(e);
                v["curve"] = json!(k);
                v
            })
        })
        .collect();
    let json = json!({
        "command": "links",
        "scene": scene_name(scene),
        "curves": link.curves.iter().map(|c| curve_json(scene, c)).collect::<Vec<_>>(),
        "events": events,
        "linking": if link.curves.len() == 2 && all_closed { json!(matrix[0].2.value) } else { Value::Null },
        "linking_matrix": matrix.iter().map(|(i, j, l)| json!({"i": i, "j": j, "value": l.value, "raw": l.raw, "residual": l.residual})).collect::<Vec<_>>(),
        "min_separation": if link.curves.len() >= 2 { json!(link.min_separation()) } else { Value::Null },
    });

    let mut header = vec!["curve".to_string(), "index".to_string()];
    header.extend(coord_header(&scene.chart));
    header.extend(["re1", "im1", "re2", "im2", "tag"].map(String::from));
    let mut rows = Vec::new();
    for (k, c) in link.curves.iter().enumerate() {
        for (i, p) in c.samples.iter().enumerate() {
            let mut r = vec![k.to_string(), i.to_string()];
            r.extend(p.iter().copied().map(num));
            match c.spectra.get(i).copied().flatten() {
                Some([a, b]) => r.extend([a.re, a.im, b.re, b.im].map(num)),
                None => r.extend(std::iter::repeat(String::new()).take(4)),
            }
            r.push(
                c.tags
                    .get(i)
                    .map(|t| serde_json::to_value(t).expect("tag").as_str().unwrap_or("").to_string())
                    .unwrap_or_default(),
            );
            rows.push(r);
        }
    }

    let names = scene.chart.coord_names();
    let mut plot = Plot::new("singular link", names[axes[0]], names[axes[1]]);
    for (k, c) in link.curves.iter().enumerate() {
        plot.lines.push(Polyline {
            points: c.samples.iter().map(|p| project(p, axes)).collect(),
            closed: c.closed,
            class: ["curve", "curve1", "curve2"][k % 3].into(),
        });
        for e in &c.events {
            plot.markers.push((project(&e.location, axes), "event".into()));
        }
    }
    let report = Report {
        json,
        csv: Some(csv_text(&header, &rows)),
        svg: Some(plot.to_svg()),
    };
    Ok((link, report))
}

// ----------------------------------------------------------------- charfol

const DEFAULT_RETURN_SAMPLES: usize = 41;

/// Characteristic foliation of the scene's surface, with the return map and
/// closed leaves along the scene's transversal when one is given.
pub fn charfol(scene: &Scene) -> Result<Report> {
    let surface = scene
        .surface
        .as_ref()
        .ok_or_else(|| Error::Invalid("scene has no `surface`".into()))?;
    let lf = char_foliation(surface, &scene.one_form, scene.tolerances.singular_angle());
    let mut json = lf.to_json();
    json["command"] = json!("charfol");
    json["scene"] = scene_name(scene);
    if let Some(threshold) = scene.tolerances.transversality {
        json["transversality"] = json!(surface_transversality(&scene.field, surface, threshold)?);
    }
    let mut plot = Plot::new("characteristic foliation", "u", "v");
    let cell = surface.cell();
    let half = 0.4 * cell[0].min(cell[1]);
    for (k, uv) in lf.nodes.iter().enumerate() {
        if lf.singular_nodes.contains(&k) {
            plot.markers.push((*uv, "singular".into()));
        } else if let Some(d) = lf.uv_direction(*uv) {
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if l > 0.0 {
                let d = [half * d[0] / l, half * d[1] / l];
                plot.segments.push(([uv[0] - d[0], uv[1] - d[1]], [uv[0] + d[0], uv[1] + d[1]]));
            }
        }
    }
    if let Some(tr) = &scene.transversal {
        let n = scene.tolerances.return_samples.unwrap_or(DEFAULT_RETURN_SAMPLES);
        let ropts = scene.tolerances.returns();
        let leaves = limit_cycles(&lf, tr, n, &ropts);
        json["transversal"] = json!(tr);
        json["return_map"] = json!(return_map(&lf, tr, n, &ropts));
        for c in &leaves {
            plot.markers.push((c.uv, "event".into()));
        }
        json["closed_leaves"] = json!(leaves);
        plot.lines.push(Polyline {
            points: vec![tr.point(tr.range[0]), tr.point(tr.range[1])],
            closed: false,
            class: "curve1".into(),
        });
    }
    let header = ["u", "v", "du", "dv", "singular"].map(String::from);
    let rows: Vec<Vec<String>> = lf
        .nodes
        .iter()
        .enumerate()
        .map(|(k, uv)| {
            let d = lf.uv_direction(*uv);
            vec![
                num(uv[0]),
                num(uv[1]),
                d.map(|d| num(d[0])).unwrap_or_default(),
                d.map(|d| num(d[1])).unwrap_or_default(),
                lf.singular_nodes.contains(&k).to_string(),
            ]
        })
        .collect();
    Ok(Report {
        json,
        csv: Some(csv_text(&header, &rows)),
        svg: Some(plot.to_svg()),
    })
}

// ----------------------------------------------------------- contact-check

/// Density within this of zero counts as zero.
const DENSITY_ZERO: f64 = 1e-12;

/// Grid used by [`contact_check`]: `n` per axis, or the default
/// `25 x 20 x 20` Hopf-angle grid on the sphere and `22^3` in a box.
pub fn contact_grid(chart: &Chart, n: Option<usize>) -> Vec<Vec<f64>> {
    match (chart, n) {
        (_, Some(n)) => chart.sample_grid(n),
        (Chart::Sphere, None) => hopf_grid(25, 20, 20),
        (Chart::Box { .. }, None) => chart.sample_grid(22),
    }
}

/// Frobenius density of the scene form over a grid, and the tangency
/// residual `|alpha(X)|` of the scene field.
pub fn contact_check(scene: &Scene) -> Result<Report> {
    let grid = contact_grid(&scene.chart, scene.tolerances.grid);
    let mut rows = Vec::with_capacity(grid.len());
    let (mut pos, mut neg, mut zero) = (0usize, 0usize, 0usize);
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut tmax, mut trel) = (0.0f64, 0.0f64);
    for p in &grid {
        let d: f64 = frobenius_density(&scene.one_form, p);
        let x: Vec<f64> = scene.field.eval(p);
        let a: f64 = scene.one_form.apply(p, &x);
        let scale = norm(&scene.one_form.tangential::<f64>(p)) * norm(&x);
        tmax = tmax.max(a.abs());
        if scale > 0.0 {
            trel = trel.max(a.abs() / scale);
        }
        dmin = dmin.min(d);
        dmax = dmax.max(d);
        if d > DENSITY_ZERO {
            pos += 1;
        } else if d < -DENSITY_ZERO {
            neg += 1;
        } else {
            zero += 1;
        }
        let mut r: Vec<String> = p.iter().copied().map(num).collect();
        r.push(num(d));
        r.push(num(a));
        rows.push(r);
    }
    let sign = match (pos, neg, zero) {
        (_, 0, 0) => json!(1),
        (0, _, 0) => json!(-1),
        (0, 0, _) => json!(0),
        _ => Value::Null,
    };
    let json = json!({
        "command": "contact-check",
        "scene": scene_name(scene),
        "samples": grid.len(),
        "frobenius": {
            "min": dmin,
            "max": dmax,
            "positive": pos,
            "negative": neg,
            "zero": zero,
            "sign": sign,
        },
        "tangency": {
            "max_abs": tmax,
            "max_relative": trel,
        },
    });
    let mut header = coord_header(&scene.chart);
    header.extend(["density", "alpha_x"].map(String::from));
    Ok(Report {
        json,
        csv: Some(csv_text(&header, &rows)),
        svg: None,
    })
}

// ---------------------------------------------------------------- handles

/// Validation report; an invalid diagram is an error carrying the
/// violations.
pub fn rhd_validate(rhd: &Rhd) -> Result<Report> {
    let r = handles::validate(rhd);
    if !r.valid {
        return Err(Error::InvalidRhd {
            violations: r.violations.iter().map(|v| v.message.clone()).collect(),
        });
    }
    Ok(Report::json(json!({
        "command": "rhd",
        "name": rhd.name,
        "report": r,
    })))
}

/// Essentiality report. Returns the report and whether the diagram is
/// essential.
pub fn rhd_essential(rhd: &Rhd) -> Result<(Report, bool)> {
    let e = handles::is_essential(rhd)?;
    let ok = e.essential;
    Ok((
        Report::json(json!({
            "command": "rhd",
            "name": rhd.name,
            "essential": e,
        })),
        ok,
    ))
}

fn knot_json(k: &KnotExpr) -> Value {
    json!({"expr": k, "text": k.to_string(), "nodes": k.nodes()})
}

pub fn knots_canonicalize(k: &KnotExpr) -> Report {
    let c = k.canonicalize();
    Report::json(json!({
        "command": "knots",
        "input": knot_json(k),
        "canonical": knot_json(&c),
    }))
}

pub fn knots_enumerate(max_nodes: usize, coeff_bound: i64) -> Report {
    let list = handles::enumerate_zero_entropy(max_nodes, coeff_bound);
    Report::json(json!({
        "command": "knots",
        "max_nodes": max_nodes,
        "coeff_bound": coeff_bound,
        "count": list.len(),
        "knots": list.iter().map(knot_json).collect::<Vec<_>>(),
    }))
}
