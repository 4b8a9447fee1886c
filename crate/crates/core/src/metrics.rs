//! Evaluation: confusion matrix, per-class precision/recall/F1, accuracy,
//! macro-F1, and text/JSON/HTML renderings.
//!
//! Metric values are generic over [`Measure`], so the same code yields
//! `f64` results or exact rationals. Rendered percentages are always
//! rounded with exact integer arithmetic from the underlying counts.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::scalar::Measure;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("cannot evaluate an empty prediction set")]
    Empty,
    #[error("malformed report: {0}")]
    BadReport(String),
}

/// `cells[t][p]` counts documents of true label `t` predicted as `p`.
/// Both axes use label-code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    cells: [[u64; 4]; 4],
    total: u64,
}

impl Confusion {
    pub fn from_cells(cells: [[u64; 4]; 4]) -> Result<Self, MetricsError> {
        let total = cells.iter().flatten().sum();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        Ok(Confusion { cells, total })
    }

    pub fn cells(&self) -> &[[u64; 4]; 4] {
        &self.cells
    }

    pub fn cell(&self, truth: Label, predicted: Label) -> u64 {
        self.cells[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of documents whose true label is `label`.
    pub fn row_sum(&self, label: Label) -> u64 {
        self.cells[label.index()].iter().sum()
    }

    /// Number of documents predicted as `label`.
    pub fn col_sum(&self, label: Label) -> u64 {
        self.cells.iter().map(|row| row[label.index()]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.cells[i][i]).sum()
    }
}

pub fn confusion_matrix(y_true: &[Label], y_pred: &[Label]) -> Result<Confusion, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    let mut cells = [[0u64; 4]; 4];
    for (t, p) in y_true.iter().zip(y_pred) {
        cells[t.index()][p.index()] += 1;
    }
    Confusion::from_cells(cells)
}

/// `num / den` with `0 / 0 = 0`.
fn ratio<M: Measure>(num: u64, den: u64) -> M {
    if den == 0 {
        M::zero()
    } else {
        M::from_count(num) / M::from_count(den)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics<M> {
    pub precision: M,
    pub recall: M,
    pub f1: M,
    pub support: u64,
}

/// Precision, recall and F1 for one label; empty denominators give 0.
pub fn class_metrics<M: Measure>(conf: &Confusion, label: Label) -> ClassMetrics<M> {
    let tp = conf.cell(label, label);
    let predicted = conf.col_sum(label);
    let actual = conf.row_sum(label);
    // 2PR/(P+R) reduces to 2tp/(predicted+actual) whenever P+R > 0
    ClassMetrics {
        precision: ratio(tp, predicted),
        recall: ratio(tp, actual),
        f1: ratio(2 * tp, predicted + actual),
        support: actual,
    }
}

pub fn accuracy<M: Measure>(conf: &Confusion) -> M {
    ratio(conf.trace(), conf.total())
}

/// Unweighted mean of per-class F1 values.
pub fn mean_f1<M: Measure>(f1: &[M; 4]) -> M {
    f1.iter().cloned().fold(M::zero(), |acc, v| acc + v) / M::from_count(4)
}

/// Macro-F1 over all four labels, including unsupported ones.
pub fn macro_f1<M: Measure>(conf: &Confusion) -> M {
    mean_f1(&Label::ALL.map(|l| class_metrics::<M>(conf, l).f1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    HalfUp,
    HalfDown,
}

/// `100 * num / den` rounded to `decimals` places, as text. Exact.
pub fn format_percent(num: u128, den: u128, decimals: u32, mode: Rounding) -> String {
    assert!(den > 0, "percentage of an empty total");
    let unit = 10u128.pow(decimals);
    let scaled = num * 100 * unit;
    let (mut q, r) = (scaled / den, scaled % den);
    let round_up = match mode {
        Rounding::HalfUp => 2 * r >= den,
        Rounding::HalfDown => 2 * r > den,
    };
    if round_up {
        q += 1;
    }
    if decimals == 0 {
        q.to_string()
    } else {
        format!(
            "{}.{:0width$}",
            q / unit,
            q % unit,
            width = decimals as usize
        )
    }
}

/// Rounds an exact rational to a whole percent.
pub fn percent_of_ratio(value: &Ratio<u128>, mode: Rounding) -> String {
    format_percent(*value.numer(), *value.denom(), 0, mode)
}

/// One grid cell: `"<count> <pct>%"` with two decimals.
pub fn format_cell(count: u64, total: u64) -> String {
    format!(
        "{count} {}%",
        format_percent(count.into(), total.into(), 2, Rounding::HalfUp)
    )
}

/// `"Accuracy=<pct>"` with three decimals.
pub fn accuracy_footer(conf: &Confusion) -> String {
    format!(
        "Accuracy={}",
        format_percent(
            conf.trace().into(),
            conf.total().into(),
            3,
            Rounding::HalfUp
        )
    )
}

/// Text grid: true labels on rows, predictions on columns.
pub fn render_confusion(conf: &Confusion, title: &str) -> String {
    let corner = "true \\ predicted";
    let mut table: Vec<Vec<String>> = vec![std::iter::once(corner.to_string())
        .chain(Label::ALL.iter().map(|l| l.display_name().to_string()))
        .collect()];
    for t in Label::ALL {
        let mut row = vec![t.display_name().to_string()];
        row.extend(
            Label::ALL
                .iter()
                .map(|&p| format_cell(conf.cell(t, p), conf.total())),
        );
        table.push(row);
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if !title.is_empty() {
        out.push_str(title);
        out.push('\n');
    }
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out.push_str(&accuracy_footer(conf));
    out.push('\n');
    out
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Static HTML table with the same cells as [`render_confusion`].
pub fn render_confusion_html(conf: &Confusion, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<table class=\"confusion\">");
    let _ = writeln!(out, "<caption>{}</caption>", escape_html(title));
    let _ = write!(out, "<tr><th>true \\ predicted</th>");
    for p in Label::ALL {
        let _ = write!(out, "<th>{}</th>", p.display_name());
    }
    let _ = writeln!(out, "</tr>");
    for t in Label::ALL {
        let _ = write!(out, "<tr><th>{}</th>", t.display_name());
        for p in Label::ALL {
            let _ = write!(
                out,
                "<td>{}</td>",
                format_cell(conf.cell(t, p), conf.total())
            );
        }
        let _ = writeln!(out, "</tr>");
    }
    let _ = writeln!(out, "</table>");
    let _ = writeln!(out, "<p>{}</p>", accuracy_footer(conf));
    out
}

/// Everything derived from one confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<M> {
    pub confusion: Confusion,
    pub per_class: [ClassMetrics<M>; 4],
    pub accuracy: M,
    pub macro_f1: M,
}

pub fn classification_report<M: Measure>(conf: &Confusion) -> EvalReport<M> {
    EvalReport {
        confusion: *conf,
        per_class: Label::ALL.map(|l| class_metrics(conf, l)),
        accuracy: accuracy(conf),
        macro_f1: macro_f1(conf),
    }
}

fn table_name(label: Label) -> &'static str {
    match label {
        Label::False => "False",
        Label::True => "True",
        Label::PartiallyFalse => "Partially false",
        Label::Other => "Other",
    }
}

impl<M: Measure> EvalReport<M> {
    /// Per-class table plus accuracy and macro-F1, as whole percents
    /// rounded half-up from the exact counts.
    pub fn to_text(&self) -> String {
        let conf = &self.confusion;
        let pct = |n: u64, d: u64| {
            if d == 0 {
                "0%".to_string()
            } else {
                format!(
                    "{}%",
                    format_percent(n.into(), d.into(), 0, Rounding::HalfUp)
                )
            }
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>7} {:>9} {:>8}",
            "Class name", "Precision", "Recall", "F1-score", "Support"
        );
        for l in Label::ALL {
            let tp = conf.cell(l, l);
            let (pred, actual) = (conf.col_sum(l), conf.row_sum(l));
            let _ = writeln!(
                out,
                "{:<16} {:>9} {:>7} {:>9} {:>8}",
                table_name(l),
                pct(tp, pred),
                pct(tp, actual),
                pct(2 * tp, pred + actual),
                actual
            );
        }
        let exact_macro: Ratio<u128> = macro_f1(conf);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:>9}",
            "Accuracy",
            pct(conf.trace(), conf.total())
        );
        let _ = writeln!(
            out,
            "{:<16} {:>9}",
            "F1-macro avg",
            format!("{}%", percent_of_ratio(&exact_macro, Rounding::HalfUp))
        );
        out
    }

    pub fn to_json(&self) -> JsonReport {
        JsonReport {
            labels: Label::ALL.map(|l| l.display_name().to_string()).to_vec(),
            confusion: self.confusion.cells,
            total: self.confusion.total,
            per_class: Label::ALL
                .iter()
                .zip(&self.per_class)
                .map(|(l, m)| JsonClass {
                    label: l.display_name().to_string(),
                    precision: m.precision.approx_f64(),
                    recall: m.recall.approx_f64(),
                    f1: m.f1.approx_f64(),
                    support: m.support,
                })
                .collect(),
            accuracy: self.accuracy.approx_f64(),
            macro_f1: self.macro_f1.approx_f64(),
        }
    }
}

/// Machine-readable report; see `docs/report-schema.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub labels: Vec<String>,
    pub confusion: [[u64; 4]; 4],
    pub total: u64,
    pub per_class: Vec<JsonClass>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonClass {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl JsonReport {
    /// Recovers the confusion matrix, checking the stored total and label order.
    pub fn confusion(&self) -> Result<Confusion, MetricsError> {
        let expected: Vec<&str> = Label::ALL.iter().map(|l| l.display_name()).collect();
        if self.labels != expected {
            return Err(MetricsError::BadReport(format!(
                "unexpected label order {:?}",
                self.labels
            )));
        }
        let conf = Confusion::from_cells(self.confusion)?;
        if conf.total() != self.total {
            return Err(MetricsError::BadReport(format!(
                "total {} does not match cell sum {}",
                self.total,
                conf.total()
            )));
        }
        Ok(conf)
    }
}
