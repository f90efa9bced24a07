//! Training, weighted late fusion, and protocol evaluation.

mod fusion;
mod metrics;
mod pipeline;
mod train;

pub use fusion::{argmax, fuse, search_weights, FusedResult, FusionWeights};
pub use metrics::{
    accuracy, confusion_matrix, confusion_to_csv, roc_auc, roc_to_csv, RocCurve, RocReport,
};
pub use pipeline::{
    aggregate_folds, evaluate_protocol, evaluate_split, render_part_images, EvalAggregate,
    EvalReport, PipelineConfig, ProtocolReport, SplitArtifacts,
};
pub use train::{
    derive_seed, eval_loss_acc, predict_part, train_part, EpochStats, LabeledImage,
    TrainHistory, TrainingConfig,
};

use crate::error::{Error, Result};
use crate::skeleton::PartLabel;

/// Per-part class-probability vectors over an ordered sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct PartPredictions {
    pub part: PartLabel,
    pub ids: Vec<String>,
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl PartPredictions {
    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.probs.len() || self.ids.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "part {}: {} ids, {} probability rows, {} labels",
                self.part,
                self.ids.len(),
                self.probs.len(),
                self.labels.len()
            )));
        }
        for (id, p) in self.ids.iter().zip(&self.probs) {
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Verification(format!(
                    "part {} sample {id}: probabilities sum to {s}, expected 1",
                    self.part
                )));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    /// Errors unless `other` covers the same samples in the same order.
    pub fn check_aligned(&self, other: &PartPredictions) -> Result<()> {
        if self.ids != other.ids || self.labels != other.labels {
            return Err(Error::InvalidArgument(format!(
                "parts {} and {} cover different samples or orders",
                self.part, other.part
            )));
        }
        Ok(())
    }

    /// CSV per the external-interface contract: a header naming the part
    /// and classes, then one row per sample.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut s = format!("# part = {}\n", self.part);
        s.push_str("id,label");
        for c in class_names {
            s.push_str(&format!(",p_{c}"));
        }
        s.push('\n');
        for i in 0..self.ids.len() {
            s.push_str(&format!("{},{}", self.ids[i], self.labels[i]));
            for p in &self.probs[i] {
                s.push_str(&format!(",{p:.17}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, path: &std::path::Path) -> Result<PartPredictions> {
        let mut part = None;
        let mut ids = Vec::new();
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    if k.trim() == "part" {
                        part = Some(PartLabel::from_str(v.trim())?);
                    }
                }
                continue;
            }
            if line.starts_with("id,") {
                continue; // column header
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(Error::parse(path, lineno + 1, "expected id,label,p_0,..."));
            }
            ids.push(fields[0].to_string());
            labels.push(
                fields[1]
                    .parse()
                    .map_err(|_| Error::parse(path, lineno + 1, "malformed label"))?,
            );
            let row: std::result::Result<Vec<f64>, _> =
                fields[2..].iter().map(|f| f.parse::<f64>()).collect();
            probs.push(row.map_err(|_| Error::parse(path, lineno + 1, "malformed probability"))?);
        }
        let part = part
            .ok_or_else(|| Error::parse(path, 1, "missing `# part = ...` header"))?;
        let out = PartPredictions { part, ids, probs, labels };
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions_csv_round_trips() {
        let preds = PartPredictions {
            part: PartLabel::Ll,
            ids: vec!["a".into(), "b".into()],
            probs: vec![vec![0.25, 0.75], vec![1.0 / 3.0, 2.0 / 3.0]],
            labels: vec![1, 0],
        };
        let classes = vec!["x".to_string(), "y".to_string()];
        let csv = preds.to_csv(&classes);
        assert!(csv.starts_with("# part = LL\n"));
        assert!(csv.contains("p_x,p_y"));
        let back = PartPredictions::from_csv(&csv, std::path::Path::new("mem")).unwrap();
        assert_eq!(back.part, preds.part);
        assert_eq!(back.ids, preds.ids);
        assert_eq!(back.labels, preds.labels);
        for (a, b) in back.probs.iter().flatten().zip(preds.probs.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn validation_rejects_non_distributions() {
        let bad = PartPredictions {
            part: PartLabel::Hs,
            ids: vec!["a".into()],
            probs: vec![vec![0.9, 0.3]],
            labels: vec![0],
        };
        assert!(bad.validate().is_err());
    }
}
