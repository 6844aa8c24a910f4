use std::fmt::Write as _;
use std::io::Write;

use super::{rank_features, ShapExplanation};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Mid-rank percentile of each value within `values`:
/// `(#less + #equal / 2) / n`.
pub fn percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&o| o < v).count() as f64;
            let equal = values.iter().filter(|&&o| o == v).count() as f64;
            (less + equal / 2.0) / n
        })
        .collect()
}

struct Plotted {
    name: String,
    shap: Vec<f64>,
    values: Vec<f64>,
    percentiles: Vec<f64>,
}

fn plotted(e: &ShapExplanation, x: &FeatureMatrix, top_n: usize) -> Result<Vec<Plotted>> {
    if top_n > e.schema.len() {
        return Err(Error::Config(format!(
            "top_n {top_n} exceeds feature count {}",
            e.schema.len()
        )));
    }
    if x.unit_ids != e.unit_ids {
        return Err(Error::SchemaMismatch("feature matrix units differ from the explanation".into()));
    }
    let x = x.project(&e.schema)?;
    let ranking = rank_features(e);
    Ok(ranking.entries[..top_n]
        .iter()
        .map(|entry| {
            let f = e.schema.index_of(&entry.key).expect("ranking covers schema");
            let values: Vec<f64> = x.rows.iter().map(|r| r[f]).collect();
            Plotted {
                name: entry.name.clone(),
                shap: e.matrix.iter().map(|r| r[f]).collect(),
                percentiles: percentiles(&values),
                values,
            }
        })
        .collect())
}

/// Writes `feature,unit_id,shap_value,feature_value,feature_percentile`
/// rows for the `top_n` features by mean |SHAP|.
pub fn export_beeswarm(
    e: &ShapExplanation,
    x: &FeatureMatrix,
    top_n: usize,
    out: &mut dyn Write,
) -> Result<()> {
    let rows = plotted(e, x, top_n)?;
    writeln!(out, "feature,unit_id,shap_value,feature_value,feature_percentile")?;
    for p in &rows {
        for (u, id) in e.unit_ids.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.name, id, p.shap[u], p.values[u], p.percentiles[u]
            )?;
        }
    }
    Ok(())
}

fn color(percentile: f64) -> String {
    // blue (low) to red (high)
    let lerp = |a: f64, b: f64| (a + (b - a) * percentile).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(30.0, 255.0), lerp(136.0, 13.0), lerp(229.0, 87.0))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Self-contained SVG beeswarm. Vertical offsets within a row come from
/// each dot's rank by SHAP value, so output is byte-stable.
pub fn beeswarm_svg(e: &ShapExplanation, x: &FeatureMatrix, top_n: usize) -> Result<String> {
    let rows = plotted(e, x, top_n)?;
    let (label_w, plot_w, row_h, top, bottom) = (220.0, 560.0, 44.0, 20.0, 40.0);
    let width = label_w + plot_w + 20.0;
    let height = top + row_h * rows.len() as f64 + bottom;
    let max_abs = rows
        .iter()
        .flat_map(|p| p.shap.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let span = if max_abs > 0.0 { max_abs } else { 1.0 };
    let zero_x = label_w + plot_w / 2.0;
    let sx = |v: f64| zero_x + v / span * (plot_w / 2.0 - 6.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<line x1="{zero_x:.2}" y1="{top:.2}" x2="{zero_x:.2}" y2="{:.2}" stroke="#999" stroke-width="1"/>"##,
        height - bottom
    );
    for (r, p) in rows.iter().enumerate() {
        let cy = top + row_h * (r as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            label_w - 8.0,
            cy,
            escape(&p.name)
        );
        let mut order: Vec<usize> = (0..p.shap.len()).collect();
        order.sort_by(|&a, &b| p.shap[a].total_cmp(&p.shap[b]).then(a.cmp(&b)));
        for (rank, &u) in order.iter().enumerate() {
            let jitter = ((rank % 9) as f64 - 4.0) * 3.5;
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
                sx(p.shap[u]),
                cy + jitter,
                color(p.percentiles[u])
            );
        }
    }
    let axis_y = height - bottom + 16.0;
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{axis_y:.2}" text-anchor="middle">SHAP value (impact on model output)</text>"#,
        zero_x
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{axis_y:.2}" text-anchor="start">{:.3}</text>"#,
        label_w,
        -span
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{axis_y:.2}" text-anchor="end">{:.3}</text>"#,
        label_w + plot_w,
        span
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}
