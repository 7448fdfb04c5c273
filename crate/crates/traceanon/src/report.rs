//! Report rendering: the comparison CSV schema, marginal CSVs, and static
//! SVG bar charts of the marginals.

use std::fmt::Write as _;

use crate::metrics::{ComparisonResult, MarginalAxis, MarginalReport};

pub const RESULTS_HEADER: &str =
    "policy,field,algorithm,baseline_count,anony_count,tp,fp,fn,error,status";

/// One line of the results CSV. Failed runs keep their row; the status
/// column says what went wrong and the numeric columns stay empty.
pub fn result_row(
    policy: &str,
    field: &str,
    algorithm: &str,
    outcome: &Result<ComparisonResult, String>,
) -> String {
    match outcome {
        Ok(r) => format!(
            "{policy},{field},{algorithm},{},{},{},{},{},{},ok",
            r.baseline_total,
            r.anony_total,
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.error()
        ),
        Err(reason) => {
            let clean = reason.replace([',', '\n'], ";");
            format!("{policy},{field},{algorithm},,,,,,,error: {clean}")
        }
    }
}

pub fn marginal_csv(report: &MarginalReport) -> String {
    let axis = match report.axis {
        MarginalAxis::ByField => "field",
        MarginalAxis::ByAlgorithm => "algorithm",
    };
    let mut out = format!("{axis},fp_avg,fn_avg,error_avg,alerts_avg,alerts_max,alerts_min,runs\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2},{},{},{}",
            row.name,
            row.fp_avg,
            row.fn_avg,
            row.error_avg,
            row.alerts_avg,
            row.alerts_max,
            row.alerts_min,
            row.runs
        );
    }
    out
}

/// A horizontal bar chart of one named series. Values are linearly scaled
/// to the widest bar; zero-max charts render empty bars rather than NaN.
pub fn bar_chart_svg(title: &str, rows: &[(String, f64)]) -> String {
    const BAR_HEIGHT: usize = 18;
    const GAP: usize = 6;
    const LABEL_WIDTH: usize = 190;
    const CHART_WIDTH: usize = 560;
    const VALUE_WIDTH: usize = 110;
    const TOP: usize = 40;

    let height = TOP + rows.len() * (BAR_HEIGHT + GAP) + 20;
    let width = LABEL_WIDTH + CHART_WIDTH + VALUE_WIDTH;
    let max = rows.iter().map(|(_, v)| *v).fold(0.0f64, f64::max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        svg,
        "  <style>text{{font-family:sans-serif;font-size:12px}}.title{{font-size:14px;font-weight:bold}}</style>"
    );
    let _ = writeln!(
        svg,
        "  <text class=\"title\" x=\"10\" y=\"22\">{}</text>",
        escape_xml(title)
    );
    for (i, (name, value)) in rows.iter().enumerate() {
        let y = TOP + i * (BAR_HEIGHT + GAP);
        let bar = if max > 0.0 {
            ((value / max) * CHART_WIDTH as f64).round() as usize
        } else {
            0
        };
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            LABEL_WIDTH - 6,
            y + BAR_HEIGHT - 5,
            escape_xml(name)
        );
        let _ = writeln!(
            svg,
            "  <rect x=\"{LABEL_WIDTH}\" y=\"{y}\" width=\"{bar}\" height=\"{BAR_HEIGHT}\" fill=\"#4477aa\"/>"
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\">{value:.2}</text>",
            LABEL_WIDTH + bar + 6,
            y + BAR_HEIGHT - 5
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
