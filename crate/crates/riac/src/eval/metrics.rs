//! Confusion matrices and one-vs-rest ROC/AUC.

use crate::error::{Error, Result};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / predicted.len() as f64
}

/// Cell (r, c) counts samples with true class r predicted as c.
pub fn confusion_matrix(
    predicted: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "label out of range: true {t}, predicted {p}, {n_classes} classes"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn confusion_to_csv(m: &[Vec<usize>], class_names: &[String]) -> String {
    let mut s = String::from("true\\pred");
    for c in class_names {
        s.push_str(&format!(",{c}"));
    }
    s.push('\n');
    for (r, row) in m.iter().enumerate() {
        s.push_str(&class_names[r]);
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

/// One-vs-rest ROC curve for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub class: usize,
    /// (false-positive rate, true-positive rate) points, (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocReport {
    pub curves: Vec<RocCurve>,
    /// Classes without both a positive and a negative sample.
    pub skipped: Vec<usize>,
    pub macro_auc: f64,
}

/// Threshold-sweep ROC per class over the given score vectors, with AUC by
/// the trapezoidal rule and a macro average over evaluable classes.
pub fn roc_auc(scores: &[Vec<f64>], truth: &[usize], n_classes: usize) -> Result<RocReport> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!("{} score rows vs {} labels", scores.len(), truth.len())));
    }
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for class in 0..n_classes {
        let pos = truth.iter().filter(|&&t| t == class).count();
        let neg = truth.len() - pos;
        if pos == 0 || neg == 0 {
            skipped.push(class);
            continue;
        }
        curves.push(one_vs_rest(scores, truth, class, pos, neg));
    }
    if curves.is_empty() {
        return Err(Error::InvalidArgument(
            "no class has both positive and negative samples; ROC undefined".into(),
        ));
    }
    let macro_auc = curves.iter().map(|c| c.auc).sum::<f64>() / curves.len() as f64;
    Ok(RocReport { curves, skipped, macro_auc })
}

fn one_vs_rest(scores: &[Vec<f64>], truth: &[usize], class: usize, pos: usize, neg: usize) -> RocCurve {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Descending score; index as secondary key for determinism.
    order.sort_by(|&a, &b| {
        scores[b][class]
            .partial_cmp(&scores[a][class])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Samples sharing a score cross the threshold together.
        let s = scores[order[i]][class];
        let mut j = i;
        while j < order.len() && scores[order[j]][class] == s {
            if truth[order[j]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let p = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let prev = *points.last().unwrap();
        auc += (p.0 - prev.0) * (p.1 + prev.1) / 2.0;
        points.push(p);
        i = j;
    }
    RocCurve { class, points, auc }
}

pub fn roc_to_csv(report: &RocReport) -> String {
    let mut s = String::from("class,fpr,tpr\n");
    for c in &report.curves {
        for (fpr, tpr) in &c.points {
            s.push_str(&format!("{},{fpr},{tpr}\n", c.class));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let truth = vec![0, 1, 2, 1, 0];
        let m = confusion_matrix(&truth, &truth, 3).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                if r != c {
                    assert_eq!(m[r][c], 0);
                }
            }
        }
        assert_eq!(m[0][0], 2);
        assert_eq!(m[1][1], 2);
        assert_eq!(m[2][2], 1);
    }

    #[test]
    fn row_sums_match_class_counts_and_trace_is_accuracy() {
        let truth = vec![0, 0, 1, 1, 1, 2];
        let pred = vec![0, 1, 1, 1, 0, 2];
        let m = confusion_matrix(&pred, &truth, 3).unwrap();
        assert_eq!(m.iter().map(|r| r.iter().sum::<usize>()).collect::<Vec<_>>(), vec![2, 3, 1]);
        let trace: usize = (0..3).map(|i| m[i][i]).sum();
        assert_eq!(trace as f64 / truth.len() as f64, accuracy(&pred, &truth));
    }

    #[test]
    fn out_of_range_label_rejected() {
        assert!(confusion_matrix(&[3], &[0], 3).is_err());
        assert!(confusion_matrix(&[0], &[3], 3).is_err());
    }

    #[test]
    fn perfect_separation_gives_auc_one() {
        let truth = vec![0, 0, 1, 1];
        let scores = vec![
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.2, 0.8],
            vec![0.1, 0.9],
        ];
        let r = roc_auc(&scores, &truth, 2).unwrap();
        assert_eq!(r.macro_auc, 1.0);
        for c in &r.curves {
            assert_eq!(c.auc, 1.0);
        }
    }

    #[test]
    fn sign_flip_symmetry() {
        let truth = vec![0, 1, 0, 1, 1, 0, 0];
        let scores: Vec<Vec<f64>> =
            [0.9, 0.6, 0.7, 0.2, 0.4, 0.8, 0.3].iter().map(|&s| vec![s, 1.0 - s]).collect();
        let a = roc_auc(&scores, &truth, 2).unwrap();
        let flipped: Vec<Vec<f64>> = scores.iter().map(|r| vec![-r[0], -r[1]]).collect();
        let b = roc_auc(&flipped, &truth, 2).unwrap();
        for (ca, cb) in a.curves.iter().zip(&b.curves) {
            assert!((ca.auc - (1.0 - cb.auc)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_scores_hover_near_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let s: f64 = rng.gen();
                vec![s, 1.0 - s]
            })
            .collect();
        let r = roc_auc(&scores, &truth, 2).unwrap();
        assert!((r.macro_auc - 0.5).abs() < 0.05, "macro AUC {}", r.macro_auc);
    }

    #[test]
    fn single_class_labels_are_an_error() {
        let truth = vec![0, 0, 0];
        let scores = vec![vec![1.0, 0.0]; 3];
        assert!(roc_auc(&scores, &truth, 2).is_err());
    }

    #[test]
    fn unrepresented_class_is_skipped() {
        let truth = vec![0, 1, 0, 1];
        let scores = vec![vec![0.5, 0.3, 0.2]; 4];
        let r = roc_auc(&scores, &truth, 3).unwrap();
        assert_eq!(r.skipped, vec![2]);
        assert_eq!(r.curves.len(), 2);
    }
}
