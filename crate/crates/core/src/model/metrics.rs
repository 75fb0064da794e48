use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_decisions(decisions: &[bool], labels: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (&d, &l) in decisions.iter().zip(labels) {
            match (d, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
        Confusion::from_decisions(&decide(scores, threshold), labels)
    }
}

/// Positive iff `score >= threshold`.
pub fn decide(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn compute_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Metrics {
    let c = Confusion::at_threshold(scores, labels, threshold);
    Metrics {
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        fpr: ratio(c.fp, c.fp + c.tn),
        auc: auc(scores, labels),
    }
}

/// Area under the ROC curve by the trapezoid rule, sweeping thresholds from
/// the highest score down; tied scores move as one step. None for one class.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // trapezoid in count units, normalized once at the end
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Some(area / (p as f64 * n as f64))
}
