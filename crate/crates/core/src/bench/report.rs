//! Report emitters: markdown tables (4-decimal presentation, best entries
//! bolded), machine-readable CSV (full-precision floats so every numeric
//! cell survives a round trip), per-matrix CSV, and 2-D scatter SVG with
//! misclassified points in red.

use std::collections::BTreeSet;

use crate::bench::{ExperimentReport, ReportRow};
use crate::data::{DataError, Dataset};
use crate::reverse::{ConfusionMatrix, ReversePosteriors};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "markdown" | "md" => Some(ReportFormat::Markdown),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn csv_quote(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Algorithms within one sample standard deviation of the best mean are
/// presented in bold, mirroring how ties are usually highlighted.
fn bold_mask(rows: &[&ReportRow]) -> Vec<bool> {
    let best = rows
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.mean.partial_cmp(&b.mean).expect("finite accuracies"))
        .map(|(i, _)| i);
    match best {
        Some(best_idx) => {
            let threshold = rows[best_idx].mean - rows[best_idx].std_dev;
            rows.iter().map(|r| r.mean >= threshold).collect()
        }
        None => vec![false; rows.len()],
    }
}

fn markdown_rows_table(report: &ExperimentReport, out: &mut String) {
    if report.rows.is_empty() {
        return;
    }
    let mut algorithms: Vec<String> = Vec::new();
    for row in &report.rows {
        if !algorithms.contains(&row.algorithm) {
            algorithms.push(row.algorithm.clone());
        }
    }
    let mut datasets: Vec<String> = Vec::new();
    for row in &report.rows {
        if !datasets.contains(&row.dataset) {
            datasets.push(row.dataset.clone());
        }
    }
    out.push_str("## Accuracy (mean \u{b1} std over folds)\n\n");
    out.push_str("| dataset |");
    for alg in &algorithms {
        out.push_str(&format!(" {alg} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &algorithms {
        out.push_str("---|");
    }
    out.push('\n');
    for dataset in &datasets {
        let row_refs: Vec<&ReportRow> = algorithms
            .iter()
            .filter_map(|alg| {
                report
                    .rows
                    .iter()
                    .find(|r| &r.dataset == dataset && &r.algorithm == alg)
            })
            .collect();
        let bold = bold_mask(&row_refs);
        out.push_str(&format!("| {dataset} |"));
        for (r, is_bold) in row_refs.iter().zip(bold) {
            let cell = format!("{} \u{b1} {}", fmt4(r.mean), fmt4(r.std_dev));
            if is_bold {
                out.push_str(&format!(" **{cell}** |"));
            } else {
                out.push_str(&format!(" {cell} |"));
            }
        }
        out.push('\n');
    }
    out.push('\n');
}

fn markdown_curves(report: &ExperimentReport, out: &mut String) {
    for curve in &report.curves {
        out.push_str(&format!("## Sweep: {}\n\n", curve.parameter));
        out.push_str(&format!("| {} | mean accuracy |\n|---|---|\n", curve.parameter));
        for (x, acc) in curve.grid.iter().zip(&curve.mean_accuracies) {
            out.push_str(&format!("| {x} | {} |\n", fmt4(*acc)));
        }
        out.push('\n');
    }
}

fn markdown_grid(report: &ExperimentReport, out: &mut String) {
    if report.grid_cells.is_empty() {
        return;
    }
    out.push_str("## Two-spirals noise grid\n\n");
    let thetas: &[f64] = &report.grid_cells[0].theta_grid;
    out.push_str("| size | variance | baseline |");
    for theta in thetas {
        out.push_str(&format!(" \u{3b8}={theta} |"));
    }
    out.push('\n');
    out.push_str("|---|---|---|");
    for _ in thetas {
        out.push_str("---|");
    }
    out.push('\n');
    for cell in &report.grid_cells {
        out.push_str(&format!(
            "| {} | {} | {} |",
            cell.size,
            cell.variance,
            fmt4(cell.baseline_accuracy)
        ));
        for acc in &cell.rtml_accuracies {
            out.push_str(&format!(" {} |", fmt4(*acc)));
        }
        out.push('\n');
    }
    out.push('\n');
}

fn markdown_confusions(report: &ExperimentReport, out: &mut String) {
    for confusion in &report.confusions {
        out.push_str(&format!(
            "## CF({}) \u{2014} {}\n\n",
            confusion.dataset, confusion.algorithm
        ));
        out.push_str(&confusion_pretty(&confusion.matrix, &confusion.class_names));
        out.push('\n');
    }
}

/// Counts plus row-normalized rates in the 2x2 presentation layout.
pub fn confusion_pretty(cm: &ConfusionMatrix, class_names: &[String; 2]) -> String {
    let counts = cm.counts();
    let mut out = String::new();
    out.push_str("```\n");
    out.push_str(&format!(
        "true\\pred      {:>12} {:>12}\n",
        class_names[0], class_names[1]
    ));
    for truth in 0..2 {
        out.push_str(&format!(
            "{:<12} {:>12} {:>12}\n",
            class_names[truth], counts[truth][0], counts[truth][1]
        ));
    }
    if let Ok(rates) = cm.rates() {
        out.push_str("rates\n");
        for row in rates {
            out.push_str(&format!("{:>25.4} {:>12.4}\n", row[0], row[1]));
        }
    }
    out.push_str("```\n");
    out
}

fn csv_rows(report: &ExperimentReport, out: &mut String) {
    if report.rows.is_empty() {
        return;
    }
    out.push_str("[rows]\n");
    let folds = report.rows.iter().map(|r| r.fold_accuracies.len()).max().unwrap_or(0);
    out.push_str("dataset,algorithm,mean,std");
    for f in 0..folds {
        out.push_str(&format!(",fold_{f}"));
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}",
            csv_quote(&row.dataset),
            csv_quote(&row.algorithm),
            row.mean,
            row.std_dev
        ));
        for acc in &row.fold_accuracies {
            out.push_str(&format!(",{acc}"));
        }
        out.push('\n');
    }
    out.push('\n');
}

fn csv_curves(report: &ExperimentReport, out: &mut String) {
    if report.curves.is_empty() {
        return;
    }
    out.push_str("[curves]\nparameter,grid_value,mean_accuracy\n");
    for curve in &report.curves {
        for (x, acc) in curve.grid.iter().zip(&curve.mean_accuracies) {
            out.push_str(&format!("{},{},{}\n", csv_quote(&curve.parameter), x, acc));
        }
    }
    out.push('\n');
}

fn csv_grid(report: &ExperimentReport, out: &mut String) {
    if report.grid_cells.is_empty() {
        return;
    }
    out.push_str("[grid]\nsize,variance,kind,theta,accuracy\n");
    for cell in &report.grid_cells {
        out.push_str(&format!(
            "{},{},baseline,,{}\n",
            cell.size, cell.variance, cell.baseline_accuracy
        ));
        for (theta, acc) in cell.theta_grid.iter().zip(&cell.rtml_accuracies) {
            out.push_str(&format!("{},{},rtml,{},{}\n", cell.size, cell.variance, theta, acc));
        }
    }
    out.push('\n');
}

fn csv_confusions(report: &ExperimentReport, out: &mut String) {
    if report.confusions.is_empty() {
        return;
    }
    out.push_str("[confusion]\ndataset,algorithm,true_class,predicted_class,count\n");
    for confusion in &report.confusions {
        for truth in 0..2 {
            for pred in 0..2 {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_quote(&confusion.dataset),
                    csv_quote(&confusion.algorithm),
                    truth,
                    pred,
                    confusion.matrix.counts()[truth][pred]
                ));
            }
        }
    }
    out.push('\n');
}

/// Renders the full report in one of the two text formats.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("# Experiment report\n\n");
            out.push_str(&format!("seed: {}\n\nfolds: {}\n\n", report.seed, report.k_folds));
            markdown_rows_table(report, &mut out);
            markdown_curves(report, &mut out);
            markdown_grid(report, &mut out);
            markdown_confusions(report, &mut out);
            out
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str(&format!("# seed={}\n# k_folds={}\n", report.seed, report.k_folds));
            csv_rows(report, &mut out);
            csv_curves(report, &mut out);
            csv_grid(report, &mut out);
            csv_confusions(report, &mut out);
            out
        }
    }
}

/// One confusion matrix as CSV: counts then row rates.
pub fn emit_confusion_csv(cm: &ConfusionMatrix, class_names: &[String; 2]) -> String {
    let mut out = String::from("section,true_class,value_0,value_1\n");
    for truth in 0..2 {
        out.push_str(&format!(
            "counts,{},{},{}\n",
            csv_quote(&class_names[truth]),
            cm.counts()[truth][0],
            cm.counts()[truth][1]
        ));
    }
    if let Ok(rates) = cm.rates() {
        for (truth, row) in rates.iter().enumerate() {
            out.push_str(&format!(
                "rates,{},{},{}\n",
                csv_quote(&class_names[truth]),
                row[0],
                row[1]
            ));
        }
    }
    out
}

/// Reverse posteriors as CSV, column convention documented in the header.
pub fn emit_posteriors_csv(post: &ReversePosteriors) -> String {
    let mut out = String::from("true_class,predicted_class,posterior\n");
    for truth in 0..2 {
        for pred in 0..2 {
            out.push_str(&format!("{truth},{pred},{}\n", post.get(truth, pred)));
        }
    }
    out
}

const SVG_SIZE: f64 = 640.0;
const SVG_MARGIN: f64 = 40.0;
const MISS_COLOR: &str = "red";
const CLASS_COLORS: [&str; 2] = ["#1f77b4", "#2ca02c"];

/// Scatter plot of a 2-D dataset: correct predictions colored by class,
/// misclassified samples drawn last in red.
pub fn emit_scatter_svg(
    ds: &Dataset,
    predictions: &[usize],
    truth: &[usize],
) -> Result<String, DataError> {
    if ds.n_features() != 2 {
        return Err(DataError::DimensionMismatch {
            expected: 2,
            actual: ds.n_features(),
        });
    }
    if predictions.len() != ds.n_samples() || truth.len() != ds.n_samples() {
        return Err(DataError::DimensionMismatch {
            expected: ds.n_samples(),
            actual: predictions.len().min(truth.len()),
        });
    }
    let (mut min_x, mut max_x) = (f64::MAX, f64::MIN);
    let (mut min_y, mut max_y) = (f64::MAX, f64::MIN);
    for row in 0..ds.n_samples() {
        let p = ds.feature_row(row);
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let scale = |x: f64, y: f64| {
        let sx = SVG_MARGIN + (x - min_x) / span_x * (SVG_SIZE - 2.0 * SVG_MARGIN);
        let sy = SVG_SIZE - SVG_MARGIN - (y - min_y) / span_y * (SVG_SIZE - 2.0 * SVG_MARGIN);
        (sx, sy)
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n",
        s = SVG_SIZE
    );
    out.push_str(&format!(
        "  <rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n",
        s = SVG_SIZE
    ));
    let misses: BTreeSet<usize> = (0..ds.n_samples())
        .filter(|&r| predictions[r] != truth[r])
        .collect();
    for row in 0..ds.n_samples() {
        if misses.contains(&row) {
            continue;
        }
        let p = ds.feature_row(row);
        let (x, y) = scale(p[0], p[1]);
        out.push_str(&format!(
            "  <circle class=\"correct\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\"/>\n",
            CLASS_COLORS[truth[row]]
        ));
    }
    for &row in &misses {
        let p = ds.feature_row(row);
        let (x, y) = scale(p[0], p[1]);
        out.push_str(&format!(
            "  <circle class=\"miss\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{MISS_COLOR}\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Number of misclassification markers in an SVG produced by
/// [`emit_scatter_svg`].
pub fn count_miss_markers(svg: &str) -> usize {
    svg.matches("class=\"miss\"").count()
}
