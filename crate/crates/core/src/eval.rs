//! Metrics, the k-fold driver and cross-model comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::kfold;
use crate::{par, Error, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(Error::Data("R² needs at least two samples".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Data("R² is undefined for a constant target".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
}

impl ClassificationMetrics {
    /// Accuracy and macro-averaged precision / recall of a confusion matrix.
    /// A class that is never predicted contributes a precision of zero.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = confusion.len();
        if k == 0 || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Data("no samples to score".into()));
        }
        let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = (0..k)
            .map(|c| ratio(confusion[c][c], (0..k).map(|r| confusion[r][c]).sum()))
            .sum::<f64>()
            / k as f64;
        let recall = (0..k)
            .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
            .sum::<f64>()
            / k as f64;
        Ok(ClassificationMetrics {
            accuracy: trace as f64 / total as f64,
            precision,
            recall,
            confusion,
        })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

pub fn classification_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ClassificationMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Data("no samples to score".into()));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Data(format!("label out of range 0..{n_classes}: true {t}, predicted {p}")));
        }
        confusion[t][p] += 1;
    }
    ClassificationMetrics::from_confusion(confusion)
}

/// Unrounded `100 * (best - model) / best`.
pub fn relative_loss_exact(best_score: f64, model_score: f64) -> Result<f64> {
    if model_score > best_score {
        return Err(Error::Comparison(format!(
            "score {model_score} exceeds the reference best {best_score}"
        )));
    }
    if !(best_score > 0.0) {
        return Err(Error::Comparison(format!("best score {best_score} must be positive")));
    }
    Ok(100.0 * (best_score - model_score) / best_score)
}

/// Percentage shortfall against the best model, rounded to one decimal.
pub fn relative_loss(best_score: f64, model_score: f64) -> Result<f64> {
    Ok((relative_loss_exact(best_score, model_score)? * 10.0).round() / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            Task::Regression => &["r2"],
            Task::Classification => &["accuracy", "precision", "recall"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScore {
    Regression { r2: f64 },
    Classification(ClassificationMetrics),
}

impl FoldScore {
    pub fn task(&self) -> Task {
        match self {
            FoldScore::Regression { .. } => Task::Regression,
            FoldScore::Classification(_) => Task::Classification,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match (self, name) {
            (FoldScore::Regression { r2 }, "r2") => Some(*r2),
            (FoldScore::Classification(m), "accuracy") => Some(m.accuracy),
            (FoldScore::Classification(m), "precision") => Some(m.precision),
            (FoldScore::Classification(m), "recall") => Some(m.recall),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub task: Task,
    pub folds: Vec<FoldScore>,
    pub summary: BTreeMap<String, Summary>,
    /// Summed over folds (classification only).
    pub confusion: Option<Vec<Vec<u64>>>,
    /// Filled in by [`assign_relative_loss`].
    #[serde(default)]
    pub rel_loss_pct: BTreeMap<String, f64>,
    /// Selected hyperparameters, for searched baselines.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperparameters: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn from_folds(model: &str, folds: Vec<FoldScore>) -> Result<Self> {
        let task = folds
            .first()
            .ok_or_else(|| Error::Data("a report needs at least one fold".into()))?
            .task();
        if folds.iter().any(|f| f.task() != task) {
            return Err(Error::Data("folds mix regression and classification scores".into()));
        }
        let summary = task
            .metric_names()
            .iter()
            .map(|&name| {
                let values: Vec<f64> = folds.iter().filter_map(|f| f.metric(name)).collect();
                (name.to_string(), Summary::of(&values))
            })
            .collect();
        let confusion = match task {
            Task::Regression => None,
            Task::Classification => {
                let mut sum: Option<Vec<Vec<u64>>> = None;
                for f in &folds {
                    if let FoldScore::Classification(m) = f {
                        match &mut sum {
                            None => sum = Some(m.confusion.clone()),
                            Some(s) => {
                                for (row, add) in s.iter_mut().zip(&m.confusion) {
                                    for (a, b) in row.iter_mut().zip(add) {
                                        *a += b;
                                    }
                                }
                            }
                        }
                    }
                }
                sum
            }
        };
        Ok(MetricsReport {
            model: model.to_string(),
            task,
            folds,
            summary,
            confusion,
            rel_loss_pct: BTreeMap::new(),
            hyperparameters: BTreeMap::new(),
        })
    }

    /// The headline metric: R² or accuracy.
    pub fn primary(&self) -> Summary {
        self.summary[self.task.metric_names()[0]]
    }
}

/// Sets every report's relative loss, per metric, against the best mean
/// among `reports`.
pub fn assign_relative_loss(reports: &mut [MetricsReport]) -> Result<()> {
    let task = match reports.first() {
        Some(r) => r.task,
        None => return Ok(()),
    };
    if reports.iter().any(|r| r.task != task) {
        return Err(Error::Comparison("cannot compare regression and classification reports".into()));
    }
    for &name in task.metric_names() {
        let best = reports.iter().map(|r| r.summary[name].mean).fold(f64::NEG_INFINITY, f64::max);
        for r in reports.iter_mut() {
            let loss = relative_loss(best, r.summary[name].mean)?;
            r.rel_loss_pct.insert(name.to_string(), loss);
        }
    }
    Ok(())
}

/// Runs `trainer` once per (train, test) fold, folds in parallel. Errors
/// carry the fold index; scores keep fold order.
pub fn cross_validate_folds<F>(folds: &[(Vec<usize>, Vec<usize>)], trainer: F) -> Result<Vec<FoldScore>>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<FoldScore> + Sync + Send,
{
    par::try_map_indexed(folds.len(), |i| {
        trainer(i, &folds[i].0, &folds[i].1).map_err(|e| Error::Fold {
            fold: i,
            source: Box::new(e),
        })
    })
}

/// Shuffled `k`-fold cross-validation over `n` rows.
pub fn cross_validate<F>(n: usize, k: usize, seed: u64, trainer: F) -> Result<Vec<FoldScore>>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<FoldScore> + Sync + Send,
{
    cross_validate_folds(&kfold(n, k, seed)?, trainer)
}

fn pm(s: Summary) -> String {
    format!("{:.3} ± {:.3}", s.mean, s.std)
}

fn loss_cell(r: &MetricsReport, name: &str) -> String {
    r.rel_loss_pct.get(name).map_or_else(|| "-".into(), |v| format!("{v:.1}"))
}

/// Aligned markdown comparison table, one row per report.
pub fn render_markdown(reports: &[MetricsReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let (header, rows): (Vec<String>, Vec<Vec<String>>) = match first.task {
        Task::Regression => (
            vec!["Model".into(), "R²".into(), "Rel. loss (%)".into()],
            reports
                .iter()
                .map(|r| vec![r.model.clone(), pm(r.summary["r2"]), loss_cell(r, "r2")])
                .collect(),
        ),
        Task::Classification => (
            ["Model", "Accuracy", "Precision", "Recall", "Rel. loss acc / prec / rec (%)"]
                .map(String::from)
                .to_vec(),
            reports
                .iter()
                .map(|r| {
                    vec![
                        r.model.clone(),
                        pm(r.summary["accuracy"]),
                        pm(r.summary["precision"]),
                        pm(r.summary["recall"]),
                        format!(
                            "{} / {} / {}",
                            loss_cell(r, "accuracy"),
                            loss_cell(r, "precision"),
                            loss_cell(r, "recall")
                        ),
                    ]
                })
                .collect(),
        ),
    };
    let mut out = table(&header, &rows);
    for r in reports {
        if let Some(c) = &r.confusion {
            let k = c.len();
            let mut header = vec![format!("{} (true \\ predicted)", r.model)];
            header.extend((0..k).map(|j| j.to_string()));
            let rows: Vec<Vec<String>> = c
                .iter()
                .enumerate()
                .map(|(i, row)| std::iter::once(i.to_string()).chain(row.iter().map(u64::to_string)).collect())
                .collect();
            out.push('\n');
            out.push_str(&table(&header, &rows));
        }
    }
    out
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let width = |j: usize| {
        rows.iter()
            .map(|r| r[j].chars().count())
            .chain([header[j].chars().count()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..header.len()).map(width).collect();
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (c, w) in cells.iter().zip(&widths) {
            let pad = w - c.chars().count();
            let _ = write!(s, " {c}{} |", " ".repeat(pad));
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push('|');
    for w in &widths {
        let _ = write!(out, "{}|", "-".repeat(w + 2));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r_squared_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &[2.0; 3]).unwrap(), 0.0);
        assert!((r_squared(&y, &[1.0, 2.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn perfect_classification() {
        let m = classification_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (1.0, 1.0, 1.0));
        assert!(classification_metrics(&[], &[], 3).is_err());
        assert!(classification_metrics(&[3], &[0], 3).is_err());
    }

    #[test]
    fn relative_loss_examples() {
        assert_eq!(relative_loss(84.5, 84.5).unwrap(), 0.0);
        assert_eq!(relative_loss(0.158, 0.114).unwrap(), 27.8);
        // 3.5503...: the published 3.5 was computed from unrounded scores.
        assert!((relative_loss_exact(84.5, 81.5).unwrap() - 3.5).abs() < 0.1);
        assert_eq!(relative_loss(84.5, 81.5).unwrap(), 3.6);
        assert!(relative_loss(80.0, 81.0).is_err());
    }

    #[test]
    fn report_uses_population_std() {
        let folds = vec![FoldScore::Regression { r2: 0.5 }, FoldScore::Regression { r2: 0.7 }];
        let r = MetricsReport::from_folds("m", folds).unwrap();
        assert!((r.primary().mean - 0.6).abs() < 1e-15);
        assert!((r.primary().std - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cross_validate_reports_every_fold_and_honest_negatives() {
        let y: Vec<f64> = (0..20).map(f64::from).collect();
        let trainer = |_: usize, train: &[usize], test: &[usize]| {
            let c = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
            let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            Ok(FoldScore::Regression {
                r2: r_squared(&truth, &vec![c; truth.len()])?,
            })
        };
        let a = cross_validate(20, 5, 1, trainer).unwrap();
        assert_eq!(a.len(), 5);
        assert!(MetricsReport::from_folds("const", a.clone()).unwrap().primary().mean <= 0.0);
        assert_eq!(a, cross_validate(20, 5, 1, trainer).unwrap());
    }

    #[test]
    fn fold_errors_carry_index() {
        let err = cross_validate(10, 5, 0, |i, _, _| {
            if i == 3 {
                Err(Error::Data("boom".into()))
            } else {
                Ok(FoldScore::Regression { r2: 0.0 })
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 3, .. }));
    }

    #[test]
    fn markdown_marks_best_row() {
        let mk = |name: &str, r2: f64| MetricsReport::from_folds(name, vec![FoldScore::Regression { r2 }]).unwrap();
        let mut reports = vec![mk("a", 0.845), mk("b", 0.815), mk("c", 0.784)];
        assign_relative_loss(&mut reports).unwrap();
        let losses: Vec<f64> = reports.iter().map(|r| r.rel_loss_pct["r2"]).collect();
        assert_eq!(losses, vec![0.0, 3.6, 7.2]);
        let md = render_markdown(&reports);
        assert_eq!(md.lines().count(), 5);
        assert!(md.contains("| a "));
    }

    proptest! {
        #[test]
        fn macro_scores_invariant_under_relabeling(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..60),
            perm in Just([0usize, 1, 2]).prop_shuffle(),
        ) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let a = classification_metrics(&t, &p, 3).unwrap();
            let t2: Vec<usize> = t.iter().map(|&v| perm[v]).collect();
            let p2: Vec<usize> = p.iter().map(|&v| perm[v]).collect();
            let b = classification_metrics(&t2, &p2, 3).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            let trace: u64 = (0..3).map(|i| a.confusion[i][i]).sum();
            prop_assert_eq!(trace as f64 / a.total() as f64, a.accuracy);
            prop_assert_eq!(a.total(), t.len() as u64);
        }

        #[test]
        fn r_squared_never_exceeds_one(y in proptest::collection::vec(-1e3f64..1e3, 2..30), noise in -10.0f64..10.0) {
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-6));
            let p: Vec<f64> = y.iter().map(|v| v + noise).collect();
            prop_assert!(r_squared(&y, &p).unwrap() <= 1.0);
        }
    }
}
