//! Static SVG output: a grouped bar chart of final returns per noise rate
//! with standard-error whiskers, plus the underlying numbers embedded as a
//! comment so the figure is self-describing.

use std::fmt::Write as _;

use crate::sweep::SweepResult;

const PALETTE: [&str; 8] = [
    "#4878cf", "#d65f5f", "#6acc65", "#b47cc7", "#c4ad66", "#77bedb", "#e47fb0", "#8d8d8d",
];

/// Render the sweep aggregates. Bars are grouped by noise rate, one bar
/// per method; the dashed line marks the expert return.
pub fn sweep_bar_chart(result: &SweepResult, title: &str) -> String {
    let mut deltas: Vec<f64> = result.aggregates.iter().map(|a| a.delta).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let mut methods: Vec<_> = Vec::new();
    for a in &result.aggregates {
        if !methods.contains(&a.method) {
            methods.push(a.method);
        }
    }

    let width = 720.0;
    let height = 420.0;
    let margin_left = 64.0;
    let margin_bottom = 56.0;
    let margin_top = 48.0;
    let plot_w = width - margin_left - 24.0;
    let plot_h = height - margin_top - margin_bottom;

    let max_y = result
        .aggregates
        .iter()
        .map(|a| a.mean_return + a.stderr)
        .fold(result.expert_return, f64::max)
        .max(1e-9)
        * 1.1;
    let y_of = |v: f64| margin_top + plot_h * (1.0 - (v.max(0.0) / max_y));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, "<!-- data: method,delta,mean_return,stderr,n_seeds");
    for a in &result.aggregates {
        let _ = writeln!(
            svg,
            "{},{},{},{},{}",
            a.method, a.delta, a.mean_return, a.stderr, a.n_seeds
        );
    }
    let _ = writeln!(svg, "expert_return,{}", result.expert_return);
    let _ = writeln!(svg, "-->");
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#,
        width / 2.0
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" y2="{}" stroke="black"/>"#,
        margin_top + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{margin_left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        margin_top + plot_h,
        margin_left + plot_w,
        margin_top + plot_h
    );
    for i in 0..=5 {
        let v = max_y * i as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{margin_left}" y2="{y}" stroke="black"/>"#,
            margin_left - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            margin_left - 8.0,
            y + 4.0
        );
    }

    // expert reference line
    let ye = y_of(result.expert_return);
    let _ = writeln!(
        svg,
        r##"<line x1="{margin_left}" y1="{ye}" x2="{}" y2="{ye}" stroke="#444" stroke-dasharray="6,4"/>"##,
        margin_left + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">expert</text>"#,
        margin_left + plot_w,
        ye - 5.0
    );

    let group_w = plot_w / deltas.len() as f64;
    let bar_w = (group_w * 0.8) / methods.len() as f64;
    for (di, &delta) in deltas.iter().enumerate() {
        let group_x = margin_left + group_w * di as f64 + group_w * 0.1;
        for (mi, &method) in methods.iter().enumerate() {
            let Some(agg) = result
                .aggregates
                .iter()
                .find(|a| a.method == method && a.delta == delta)
            else {
                continue;
            };
            let x = group_x + bar_w * mi as f64;
            let y = y_of(agg.mean_return);
            let color = PALETTE[mi % PALETTE.len()];
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"/>"#,
                (margin_top + plot_h - y).max(0.0)
            );
            // +-1 standard error whisker
            if agg.stderr > 0.0 {
                let cx = x + bar_w / 2.0;
                let y_hi = y_of(agg.mean_return + agg.stderr);
                let y_lo = y_of(agg.mean_return - agg.stderr);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{cx:.2}" y1="{y_hi:.2}" x2="{cx:.2}" y2="{y_lo:.2}" stroke="black"/>"#
                );
                for yw in [y_hi, y_lo] {
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{:.2}" y1="{yw:.2}" x2="{:.2}" y2="{yw:.2}" stroke="black"/>"#,
                        cx - bar_w * 0.25,
                        cx + bar_w * 0.25
                    );
                }
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">noise {delta}</text>"#,
            group_x + group_w * 0.4,
            margin_top + plot_h + 18.0
        );
    }

    // legend
    for (mi, &method) in methods.iter().enumerate() {
        let x = margin_left + 110.0 * mi as f64;
        let y = height - 18.0;
        let color = PALETTE[mi % PALETTE.len()];
        let _ = writeln!(svg, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="12">{method}</text>"#,
            x + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{Aggregate, CellResult, SweepResult};
    use crate::trainer::Method;

    #[test]
    fn chart_contains_bars_whiskers_and_data_table() {
        let result = SweepResult {
            cells: vec![CellResult {
                method: Method::RilCo,
                delta: 0.0,
                seed: 1,
                outcome: Ok(1.5),
                record: None,
            }],
            aggregates: vec![
                Aggregate { method: Method::RilCo, delta: 0.0, mean_return: 1.5, stderr: 0.1, n_seeds: 5 },
                Aggregate { method: Method::RilCo, delta: 0.4, mean_return: 1.4, stderr: 0.2, n_seeds: 5 },
                Aggregate { method: Method::GailLogistic, delta: 0.0, mean_return: 1.5, stderr: 0.0, n_seeds: 5 },
                Aggregate { method: Method::GailLogistic, delta: 0.4, mean_return: 0.9, stderr: 0.05, n_seeds: 5 },
            ],
            expert_return: 1.6,
        };
        let svg = sweep_bar_chart(&result, "benchmark");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<!-- data:"));
        assert!(svg.contains("ril-co,0.4,1.4,0.2,5"));
        assert!(svg.contains("expert_return,1.6"));
        assert!(svg.matches("<rect").count() > 4);
        // deterministic output
        assert_eq!(svg, sweep_bar_chart(&result, "benchmark"));
    }
}
