//! Confusion matrices, per-class precision/recall/F1 and comparison tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let c = labels.len();
        Self {
            labels,
            counts: vec![vec![0; c]; c],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Row sums: records per true class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.labels != self.labels {
            return Err(Error::invalid("cannot add confusion matrices over different label sets"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Every cell as a percentage of all records.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        let total = self.total().max(1) as f64;
        self.counts
            .iter()
            .map(|r| r.iter().map(|c| 100.0 * *c as f64 / total).collect())
            .collect()
    }

    /// Each row as a percentage of its true class; empty rows stay zero.
    pub fn row_percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let s: u64 = r.iter().sum();
                r.iter()
                    .map(|c| if s == 0 { 0.0 } else { 100.0 * *c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn as_f64(&self) -> Vec<Vec<f64>> {
        self.counts.iter().map(|r| r.iter().map(|c| *c as f64).collect()).collect()
    }
}

/// Count `(true, predicted)` pairs over class indices below `labels.len()`.
pub fn confusion(truth: &[usize], predicted: &[usize], labels: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut m = ConfusionMatrix::new(labels.to_vec());
    for (t, p) in truth.iter().zip(predicted) {
        let c = labels.len();
        if *t >= c || *p >= c {
            return Err(Error::UnknownLabel(format!("class index {} outside {c} labels", (*t).max(*p))));
        }
        m.counts[*t][*p] += 1;
    }
    Ok(m)
}

/// Which per-class quantities hit a zero denominator and were set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ZeroDivision {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl ZeroDivision {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: f64,
    pub zero_division: ZeroDivision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub labels: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    /// Pooled over all classes: Σ TP / Σ predicted and Σ TP / Σ support.
    pub micro_avg: Averages,
    pub total: f64,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn metrics(m: &ConfusionMatrix) -> Result<MetricReport> {
    metrics_from_cells(&m.labels, &m.as_f64())
}

/// Metrics from any non-negative cell matrix; a uniformly rescaled matrix
/// (for instance the percentage view) yields the same report.
pub fn metrics_from_cells(labels: &[String], cells: &[Vec<f64>]) -> Result<MetricReport> {
    let c = labels.len();
    if c == 0 || cells.len() != c || cells.iter().any(|r| r.len() != c) {
        return Err(Error::invalid("confusion matrix must be square over a nonempty label set"));
    }
    let total: f64 = cells.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let mut per_class = Vec::with_capacity(c);
    let mut trace = 0.0;
    let (mut all_predicted, mut all_support) = (0.0, 0.0);
    for k in 0..c {
        let tp = cells[k][k];
        trace += tp;
        let support: f64 = cells[k].iter().sum();
        let predicted: f64 = cells.iter().map(|r| r[k]).sum();
        all_predicted += predicted;
        all_support += support;
        let (precision, zp) = ratio(tp, predicted);
        let (recall, zr) = ratio(tp, support);
        let (f1, zf) = ratio(2.0 * precision * recall, precision + recall);
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
            zero_division: ZeroDivision {
                precision: zp,
                recall: zr,
                f1: zf,
            },
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| f(m) * m.support).sum::<f64>() / total;
    let (micro_p, _) = ratio(trace, all_predicted);
    let (micro_r, _) = ratio(trace, all_support);
    let (micro_f1, _) = ratio(2.0 * micro_p * micro_r, micro_p + micro_r);
    Ok(MetricReport {
        labels: labels.to_vec(),
        accuracy: trace / total,
        macro_avg: Averages {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        weighted_avg: Averages {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        },
        micro_avg: Averages {
            precision: micro_p,
            recall: micro_r,
            f1: micro_f1,
        },
        total,
        per_class,
    })
}

/// Side-by-side comparison of several models: one row per class followed by
/// accuracy, macro and weighted average rows; precision, recall and F1 per model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub models: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub const ACCURACY_ROW: &str = "Accuracy";
pub const MACRO_ROW: &str = "Macro avg";
pub const WEIGHTED_ROW: &str = "Weighted avg";

pub fn report_table(reports: &[(&str, &MetricReport)]) -> Result<ReportTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("report table needs at least one report"))?;
    if reports.iter().any(|(_, r)| r.labels != first.1.labels) {
        return Err(Error::invalid("reports cover different label sets"));
    }
    let mut rows = Vec::new();
    for (k, label) in first.1.labels.iter().enumerate() {
        let cells = reports
            .iter()
            .flat_map(|(_, r)| {
                let m = &r.per_class[k];
                [m.precision, m.recall, m.f1]
            })
            .collect();
        rows.push((label.clone(), cells));
    }
    rows.push((ACCURACY_ROW.into(), reports.iter().flat_map(|(_, r)| [r.accuracy; 3]).collect()));
    for (name, pick) in [
        (MACRO_ROW, (|r: &MetricReport| r.macro_avg) as fn(&MetricReport) -> Averages),
        (WEIGHTED_ROW, |r: &MetricReport| r.weighted_avg),
    ] {
        let cells = reports
            .iter()
            .flat_map(|(_, r)| {
                let a = pick(r);
                [a.precision, a.recall, a.f1]
            })
            .collect();
        rows.push((name.into(), cells));
    }
    Ok(ReportTable {
        models: reports.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
    })
}

impl ReportTable {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["topic".to_string()];
        for m in &self.models {
            for metric in ["precision", "recall", "f1"] {
                h.push(format!("{m} {metric}"));
            }
        }
        h
    }

    /// CSV with full round-trip precision.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for (name, cells) in &self.rows {
            let mut rec = vec![name.clone()];
            rec.extend(cells.iter().map(|v| v.to_string()));
            w.write_record(rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.len() < 4 || (header.len() - 1) % 3 != 0 {
            return Err(Error::invalid("report CSV needs a topic column plus three columns per model"));
        }
        let models = header
            .iter()
            .skip(1)
            .step_by(3)
            .map(|h| h.trim_end_matches(" precision").to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let cells = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::invalid(format!("bad number {v:?}"))))
                .collect::<Result<_>>()?;
            rows.push((rec[0].to_string(), cells));
        }
        Ok(Self { models, rows })
    }

    /// Aligned plain text, four decimals.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(n, cells)| std::iter::once(n.clone()).chain(cells.iter().map(|v| format!("{v:.4}"))).collect())
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| body.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap())
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[0]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&header) + "\n";
        out += &"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
        out.push('\n');
        for row in &body {
            out += &line(row);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], &names(2)).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(m.support(), [2, 2]);
        let y: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let m = confusion(&y, &y, &names(3)).unwrap();
        assert_eq!(m.trace(), 10);
        assert!(confusion(&[0, 5], &[0, 1], &names(2)).is_err());
        assert!(confusion(&[0], &[0, 1], &names(2)).is_err());
    }

    #[test]
    fn hand_computed_metrics() {
        let m = ConfusionMatrix {
            labels: names(2),
            counts: vec![vec![3, 1], vec![2, 4]],
        };
        let r = metrics(&m).unwrap();
        assert_eq!(r.per_class[0].precision, 0.6);
        assert_eq!(r.per_class[1].precision, 0.8);
        assert_eq!(r.per_class[0].recall, 0.75);
        assert_eq!(r.per_class[1].recall, 4.0 / 6.0);
        assert_eq!(r.accuracy, 0.7);
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let m = confusion(&[0, 1, 1], &[0, 0, 0], &names(2)).unwrap();
        let r = metrics(&m).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(r.per_class[1].zero_division.precision);
        assert!(r.per_class[1].zero_division.f1);
        assert!(!r.per_class[0].zero_division.any());
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(metrics(&ConfusionMatrix::new(names(2))).is_err());
    }

    #[test]
    fn table_layout_and_round_trip() {
        let a = metrics(&confusion(&[0, 1, 2, 2], &[0, 1, 2, 1], &names(3)).unwrap()).unwrap();
        let b = metrics(&confusion(&[0, 1, 2, 2], &[0, 0, 2, 2], &names(3)).unwrap()).unwrap();
        let t = report_table(&[("tfidf", &a), ("bridge", &b)]).unwrap();
        assert_eq!(t.rows.len(), 3 + 3);
        assert!(t.rows.iter().all(|(_, c)| c.len() == 6));
        assert_eq!(ReportTable::from_csv(&t.to_csv().unwrap()).unwrap(), t);
        assert!(t.to_text().contains("Weighted avg"));
        let single = report_table(&[("tfidf", &a)]).unwrap();
        assert!(single.rows.iter().all(|(_, c)| c.len() == 3));
        let other = metrics(&confusion(&[0, 1], &[0, 1], &names(2)).unwrap()).unwrap();
        assert!(report_table(&[("a", &a), ("b", &other)]).is_err());
        assert!(report_table(&[]).is_err());
    }

    proptest! {
        #[test]
        fn weighted_recall_equals_accuracy(cells in proptest::collection::vec(0u64..50, 16)) {
            prop_assume!(cells.iter().sum::<u64>() > 0);
            let m = ConfusionMatrix { labels: names(4), counts: cells.chunks(4).map(|r| r.to_vec()).collect() };
            let r = metrics(&m).unwrap();
            prop_assert!((r.weighted_avg.recall - r.accuracy).abs() <= 1e-12);
            prop_assert!((r.micro_avg.recall - r.accuracy).abs() <= 1e-12);
            let pct = metrics_from_cells(&m.labels, &m.percentages()).unwrap();
            for (x, y) in r.per_class.iter().zip(&pct.per_class) {
                prop_assert!((x.precision - y.precision).abs() <= 1e-9);
                prop_assert!((x.recall - y.recall).abs() <= 1e-9);
                prop_assert!((x.f1 - y.f1).abs() <= 1e-9);
            }
            prop_assert!((r.accuracy - pct.accuracy).abs() <= 1e-9);
            for x in r.per_class.iter() {
                prop_assert!((0.0..=1.0).contains(&x.precision) && (0.0..=1.0).contains(&x.f1));
            }
        }

        #[test]
        fn perfect_predictions_score_one(y in proptest::collection::vec(0usize..5, 1..60)) {
            let m = confusion(&y, &y, &names(5)).unwrap();
            let r = metrics(&m).unwrap();
            prop_assert_eq!(r.accuracy, 1.0);
            for (k, c) in r.per_class.iter().enumerate() {
                if y.contains(&k) {
                    prop_assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
                }
            }
        }
    }
}
