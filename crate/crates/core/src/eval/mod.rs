//! Confusion matrices, accuracy and macro P/R/F, and the per-grade
//! distribution of tiny-structure mask sizes.

mod report;

pub use report::{confusion_svg, mts_cdf_svg, mts_stats_csv, render_report, CDF_PROBES};

use crate::dataset::QualityLabel;
use thiserror::Error;

const K: usize = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {truths} labels")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no samples of class {0}")]
    EmptyClass(QualityLabel),
    #[error(transparent)]
    IoFailure(#[from] std::io::Error),
}

/// Rows are true grades, columns predicted grades.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion(preds: &[QualityLabel], truths: &[QualityLabel]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truths: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truths) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    pub precision: [f64; K],
    pub recall: [f64; K],
    pub f: [f64; K],
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Macro averages weight the three grades equally; a class with an empty
/// row or column contributes 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision: [f64; K] = std::array::from_fn(|i| ratio(cm.counts[i][i], cm.col_sum(i)));
    let recall: [f64; K] = std::array::from_fn(|i| ratio(cm.counts[i][i], cm.row_sum(i)));
    // 2PR/(P+R) with P = tp/col, R = tp/row reduces to 2tp/(row+col): one
    // rounding, and F = P bit-for-bit whenever P = R.
    let f: [f64; K] = std::array::from_fn(|i| ratio(2 * cm.counts[i][i], cm.row_sum(i) + cm.col_sum(i)));
    let mean = |v: &[f64; K]| v.iter().sum::<f64>() / K as f64;
    Ok(Metrics {
        acc: ratio(cm.trace(), total),
        macro_p: mean(&precision),
        macro_r: mean(&recall),
        macro_f: mean(&f),
        precision,
        recall,
        f,
    })
}

/// Empirical distribution of `|M_TS|` per grade.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MtsCdf {
    sorted: [Vec<usize>; K],
}

pub fn mts_cdf(mask_sizes: &[(usize, QualityLabel)]) -> MtsCdf {
    let mut sorted: [Vec<usize>; K] = Default::default();
    for &(n, c) in mask_sizes {
        sorted[c.index()].push(n);
    }
    sorted.iter_mut().for_each(|v| v.sort_unstable());
    MtsCdf { sorted }
}

impl MtsCdf {
    pub fn sizes(&self, class: QualityLabel) -> &[usize] {
        &self.sorted[class.index()]
    }

    fn nonempty(&self, class: QualityLabel) -> Result<&[usize], EvalError> {
        let v = self.sizes(class);
        if v.is_empty() {
            Err(EvalError::EmptyClass(class))
        } else {
            Ok(v)
        }
    }

    /// Fraction of the class with `|M_TS| < t`.
    pub fn cdf(&self, class: QualityLabel, t: f64) -> Result<f64, EvalError> {
        let v = self.nonempty(class)?;
        let below = v.partition_point(|&x| (x as f64) < t);
        Ok(below as f64 / v.len() as f64)
    }

    /// Smallest integer `t` with `cdf(t) ≥ q`.
    pub fn quantile(&self, class: QualityLabel, q: f64) -> Result<usize, EvalError> {
        let v = self.nonempty(class)?;
        if q <= 0.0 {
            return Ok(0);
        }
        let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Ok(v[k - 1] + 1)
    }

    /// Conventional median (mean of the two middle values for even counts).
    pub fn median(&self, class: QualityLabel) -> Result<f64, EvalError> {
        let v = self.nonempty(class)?;
        let m = v.len() / 2;
        Ok(if v.len() % 2 == 1 {
            v[m] as f64
        } else {
            (v[m - 1] + v[m]) as f64 / 2.0
        })
    }
}
