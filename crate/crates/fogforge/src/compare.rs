//! Side-by-side comparison of solution sets from several runs.

use std::fmt::Write as _;

use fogforge_core::pareto::{hypervolume, pareto_front};
use fogforge_core::ObjectivePoint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub points: usize,
    /// Points of this method on the joint front.
    pub on_joint_front: usize,
    /// Points of this method dominated by a point of another method.
    pub dominated_by_others: usize,
    pub hypervolume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Shared hypervolume reference: 110% of the largest time and cost.
    pub reference: ObjectivePoint,
    pub joint_front: Vec<ObjectivePoint>,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub label: String,
    pub time: f64,
    pub cost: f64,
    pub on_joint_front: u8,
}

pub type Series = (String, Vec<ObjectivePoint>);

pub fn compare(sets: &[Series]) -> CompareReport {
    let all: Vec<ObjectivePoint> = sets.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let bound = |f: fn(&ObjectivePoint) -> f64| {
        let m = all.iter().map(f).fold(0.0, f64::max);
        if m > 0.0 { m * 1.1 } else { 1.0 }
    };
    let reference = ObjectivePoint::new(bound(|p| p.time), bound(|p| p.cost));
    let joint_front = pareto_front(&all);
    let methods = sets
        .iter()
        .enumerate()
        .map(|(i, (label, points))| {
            let others: Vec<&ObjectivePoint> =
                sets.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, (_, p))| p.iter()).collect();
            MethodSummary {
                label: label.clone(),
                points: points.len(),
                on_joint_front: points.iter().filter(|p| joint_front.contains(p)).count(),
                dominated_by_others: points.iter().filter(|p| others.iter().any(|q| q.dominates(p))).count(),
                hypervolume: hypervolume(points, reference),
            }
        })
        .collect();
    CompareReport { reference, joint_front, methods }
}

pub fn labeled_points(sets: &[Series], report: &CompareReport) -> Vec<LabeledPoint> {
    sets.iter()
        .flat_map(|(label, points)| {
            points.iter().map(move |p| LabeledPoint {
                label: label.clone(),
                time: p.time,
                cost: p.cost,
                on_joint_front: u8::from(report.joint_front.contains(p)),
            })
        })
        .collect()
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter plot of every series in time/cost space with a legend.
pub fn render_svg(sets: &[Series]) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 170.0, 30.0, 60.0);
    let all: Vec<ObjectivePoint> = sets.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let range = |f: fn(&ObjectivePoint) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 1.0, hi + 1.0)
        } else {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        }
    };
    let (tx, ty) = (range(|p| p.time), range(|p| p.cost));
    let px = |t: f64| left + (t - tx.0) / (tx.1 - tx.0) * (w - left - right);
    let py = |c: f64| h - bottom - (c - ty.0) / (ty.1 - ty.0) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (left, w - right, h - bottom, top);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let t = tx.0 + f * (tx.1 - tx.0);
        let c = ty.0 + f * (ty.1 - ty.0);
        let (x, y) = (px(t), py(c));
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#, y0 + 18.0);
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{c:.1}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">response time</text>"#, (x0 + x1) / 2.0, h - 15.0);
    let _ = writeln!(svg, r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">cost</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (i, (label, points)) in sets.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<g fill="{color}" fill-opacity="0.75">"#);
        for p in points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4"/>"#, px(p.time), py(p.cost));
        }
        let _ = writeln!(svg, "</g>");
        let ly = top + 10.0 + 20.0 * i as f64;
        let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{ly:.1}" r="5" fill="{color}"/>"#, w - right + 20.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - right + 32.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    svg
}
