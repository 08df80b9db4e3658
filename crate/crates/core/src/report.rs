//! Rendering of metric results, FIF reports and intervention records as
//! JSON, CSV and SVG. Output depends only on its input, so repeated runs are
//! byte-identical.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::fif::{rank_and_residual, FifReport};
use crate::interventions::InterventionRecord;
use crate::metrics::MetricResult;

fn flags(r: &FifReport) -> Value {
    json!({
        "epsilon_applied": r.epsilon_applied,
        "degenerate_perturbed": r.degenerate_perturbed,
        "converged": r.converged,
    })
}

/// The published report layout: every entry in subset order, the `top_n`
/// ranked entries and the summed residual bucket.
pub fn fif_json(r: &FifReport, top_n: usize) -> Value {
    let ranked = rank_and_residual(r, top_n);
    let entry = |features: &[String], w: f64| json!({ "subset": features, "w": w });
    json!({
        "metric": r.metric.short(),
        "bias": r.bias,
        "estimated_bias": r.estimated_bias,
        "estimation_error": r.estimation_error,
        "a_max": r.a_max,
        "a_min": r.a_min,
        "p_max": r.p_max,
        "p_min": r.p_min,
        "lambda": r.lambda,
        "conditioning_class": r.conditioning_class,
        "entries": r.entries.iter().map(|e| entry(&e.features, e.w)).collect::<Vec<_>>(),
        "top": ranked.kept.iter().map(|e| entry(&e.features, e.w)).collect::<Vec<_>>(),
        "residual": ranked.residual,
        "residual_count": ranked.residual_count,
        "delta": r.delta,
        "flags": flags(r),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn subset_label(features: &[String]) -> String {
    features.join(" & ")
}

/// Ranked entries then the residual bucket, as `subset,w`.
pub fn fif_csv(r: &FifReport, top_n: usize) -> String {
    let ranked = rank_and_residual(r, top_n);
    let mut out = String::from("subset,w\n");
    for e in &ranked.kept {
        let _ = writeln!(out, "{},{}", csv_field(&subset_label(&e.features)), e.w);
    }
    let _ = writeln!(out, "residual,{}", ranked.residual);
    out
}

pub fn metrics_json(results: &[MetricResult]) -> Value {
    json!({
        "metrics": results.iter().map(|m| json!({
            "metric": m.kind.short(),
            "value": m.value,
            "a_max": m.a_max,
            "a_min": m.a_min,
            "p_max": m.p_max(),
            "p_min": m.p_min(),
            "conditioning_class": m.conditioning_class,
            "rates": m.rates,
        })).collect::<Vec<_>>()
    })
}

/// One row per (metric, group, stratum) rate.
pub fn metrics_csv(results: &[MetricResult]) -> String {
    let mut out = String::from("metric,value,group,class,rate,mass\n");
    for m in results {
        for r in &m.rates {
            let class = r.class.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                m.kind.short(),
                m.value,
                csv_field(&r.group.to_string()),
                class,
                r.rate,
                r.mass
            );
        }
    }
    out
}

pub fn intervention_json(rec: &InterventionRecord, top_n: usize) -> Value {
    json!({
        "intervention": rec.intervention,
        "trainer": rec.trainer,
        "before": metrics_json(std::slice::from_ref(&rec.before))["metrics"][0],
        "after": metrics_json(std::slice::from_ref(&rec.after))["metrics"][0],
        "fif_before": fif_json(&rec.fif_before, top_n),
        "fif_after": fif_json(&rec.fif_after, top_n),
        "deltas": rec.deltas.iter().map(|d| json!({
            "subset": d.features,
            "before": d.before,
            "after": d.after,
            "delta": d.delta,
        })).collect::<Vec<_>>(),
        "delta_sum": rec.deltas.iter().map(|d| d.delta).sum::<f64>(),
        "empty_cells": rec.empty_cells,
        "poisoned": rec.poisoned,
    })
}

pub fn intervention_csv(rec: &InterventionRecord) -> String {
    let mut out = String::from("subset,before,after,delta\n");
    for d in &rec.deltas {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&subset_label(&d.features)),
            d.before,
            d.after,
            d.delta
        );
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

const ROW: f64 = 26.0;
const LABEL_W: f64 = 180.0;
const BAR_W: f64 = 320.0;
const PANEL_W: f64 = LABEL_W + BAR_W + 70.0;

/// Signed horizontal bars for one report, drawn at `(x0, 0)`.
fn panel(out: &mut String, r: &FifReport, top_n: usize, x0: f64, caption: &str) -> f64 {
    let ranked = rank_and_residual(r, top_n);
    let mut bars: Vec<(String, f64)> = ranked.kept.iter().map(|e| (subset_label(&e.features), e.w)).collect();
    bars.push((format!("residual ({})", ranked.residual_count), ranked.residual));
    let scale = bars.iter().map(|(_, w)| w.abs()).fold(1e-12, f64::max);
    let zero = x0 + LABEL_W + BAR_W / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" font-size="14" font-weight="bold">{}</text>"#,
        x0 + 10.0,
        escape(caption)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="40" font-size="11">{} = {:.4}, sum of FIFs = {:.4}</text>"#,
        x0 + 10.0,
        escape(&r.metric.to_string()),
        r.bias,
        r.estimated_bias
    );
    for (i, (label, w)) in bars.iter().enumerate() {
        let y = 56.0 + i as f64 * ROW;
        let len = w.abs() / scale * (BAR_W / 2.0 - 10.0);
        let (x, fill) = if *w >= 0.0 {
            (zero, "#c0392b")
        } else {
            (zero - len, "#2471a3")
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            x0 + LABEL_W - 6.0,
            y + 14.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.1}" width="{len:.2}" height="{:.1}" fill="{fill}"/>"#,
            y + 3.0,
            ROW - 8.0
        );
        let tx = if *w >= 0.0 { zero + len + 4.0 } else { zero - len - 4.0 };
        let anchor = if *w >= 0.0 { "start" } else { "end" };
        let _ = writeln!(
            out,
            r#"<text x="{tx:.2}" y="{:.1}" font-size="10" text-anchor="{anchor}">{w:.3}</text>"#,
            y + 14.0
        );
    }
    let bottom = 56.0 + bars.len() as f64 * ROW;
    let _ = writeln!(
        out,
        r##"<line x1="{zero:.1}" y1="50" x2="{zero:.1}" y2="{bottom:.1}" stroke="#333" stroke-width="1"/>"##
    );
    bottom + 10.0
}

fn svg_document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Bar chart of the top entries and the residual bucket.
pub fn fif_svg(r: &FifReport, top_n: usize) -> String {
    let mut body = String::new();
    let caption = format!("FIFs for {} (order {}), bias {:.4}", r.metric, r.lambda, r.bias);
    let h = panel(&mut body, r, top_n, 0.0, &caption);
    svg_document(PANEL_W, h, &body)
}

/// Before and after charts side by side.
pub fn intervention_svg(rec: &InterventionRecord, top_n: usize) -> String {
    let mut body = String::new();
    let b = format!("Before: bias {:.4}", rec.before.value);
    let a = format!("After: bias {:.4}", rec.after.value);
    let h1 = panel(&mut body, &rec.fif_before, top_n, 0.0, &b);
    let h2 = panel(&mut body, &rec.fif_after, top_n, PANEL_W, &a);
    svg_document(2.0 * PANEL_W, h1.max(h2), &body)
}
