//! End-to-end plumbing: sequences -> part images -> trained branches ->
//! fused predictions -> protocol reports.

use super::{
    accuracy, confusion_matrix, fuse, predict_part, roc_auc, search_weights, train_part,
    FusedResult, FusionWeights, LabeledImage, PartPredictions, TrainHistory, TrainingConfig,
};
use crate::cass::{augment, render_cass, AugmentationSpec, RenderConfig};
use crate::error::{Error, Result};
use crate::net::{ArchConfig, RiacNetModel};
use crate::skeleton::{
    make_splits, partition, resample, ActionSequence, DatasetManifest, PartLabel,
    PartitionScheme, MSR_CLASSES, MSR_SUBSETS,
};
use std::collections::BTreeMap;

/// Everything one evaluation run needs besides the data itself. The
/// architecture's class count is overridden per dataset/subset.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub arch: ArchConfig,
    pub training: TrainingConfig,
    pub render: RenderConfig,
    /// Temporal resampling target (60 in the paper).
    pub frames: usize,
    /// Train-side augmentation; test images are never augmented.
    pub augment: AugmentationSpec,
    /// "test" searches fusion weights on test predictions (paper-literal);
    /// "validation" searches on un-augmented train predictions.
    pub fusion_mode: String,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.training.validate()?;
        self.render.validate()?;
        if self.frames < 2 {
            return Err(Error::InvalidArgument("frame target must be at least 2".into()));
        }
        match self.fusion_mode.as_str() {
            "test" | "validation" => Ok(()),
            m => Err(Error::InvalidArgument(format!(
                "unknown fusion mode {m:?}; valid: test, validation"
            ))),
        }
    }
}

/// Renders every sequence into one image per requested part (resampling
/// first), optionally expanding through the augmentation menu.
pub fn render_part_images(
    seqs: &[ActionSequence],
    scheme: &PartitionScheme,
    render: &RenderConfig,
    frames: usize,
    parts: &[PartLabel],
    augmentation: Option<&AugmentationSpec>,
) -> Result<BTreeMap<PartLabel, Vec<LabeledImage>>> {
    let mut out: BTreeMap<PartLabel, Vec<LabeledImage>> =
        parts.iter().map(|&p| (p, Vec::new())).collect();
    for seq in seqs {
        let seq = resample(seq, frames)?;
        let trajs = partition(&seq, scheme)?;
        for traj in &trajs {
            let Some(bucket) = out.get_mut(&traj.part) else { continue };
            let image = render_cass(traj, render, &seq.id)?;
            match augmentation {
                Some(spec) => {
                    for (suffix, img) in augment(&image, spec)? {
                        let id = if suffix.is_empty() {
                            seq.id.clone()
                        } else {
                            format!("{}#{suffix}", seq.id)
                        };
                        bucket.push(LabeledImage {
                            id,
                            label: seq.label,
                            image: img.to_tensor(),
                        });
                    }
                }
                None => bucket.push(LabeledImage {
                    id: seq.id.clone(),
                    label: seq.label,
                    image: image.to_tensor(),
                }),
            }
        }
    }
    Ok(out)
}

/// The Table-3-shaped result of one train/test split.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dataset: String,
    pub protocol: String,
    pub fusion_mode: String,
    pub n_train: usize,
    pub n_test: usize,
    /// Accuracy per part in report order (FS first).
    pub part_accuracy: Vec<(PartLabel, f64)>,
    pub best_weights: FusionWeights,
    pub fused_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub macro_auc: f64,
    pub class_names: Vec<String>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("[report]\n");
        s.push_str(&format!("dataset = {}\n", self.dataset));
        s.push_str(&format!("protocol = {}\n", self.protocol));
        s.push_str(&format!("fusion_mode = {}\n", self.fusion_mode));
        s.push_str(&format!("n_train = {}\n", self.n_train));
        s.push_str(&format!("n_test = {}\n", self.n_test));
        for (p, a) in &self.part_accuracy {
            s.push_str(&format!("accuracy_{p} = {a}\n"));
        }
        s.push_str(&format!("best_weights = {}\n", self.best_weights));
        s.push_str(&format!("fused_accuracy = {}\n", self.fused_accuracy));
        s.push_str(&format!("macro_auc = {}\n", self.macro_auc));
        s.push_str("\n[confusion]\n");
        s.push_str(&super::metrics::confusion_to_csv(&self.confusion, &self.class_names));
        s
    }
}

/// All artifacts of one evaluated split.
#[derive(Debug, Clone)]
pub struct SplitArtifacts {
    pub report: EvalReport,
    pub fused: FusedResult,
    /// In report order (FS first): model, history, test predictions.
    pub parts: Vec<(PartLabel, RiacNetModel, TrainHistory, PartPredictions)>,
}

/// Trains all six branches on the train side, fuses the five parts, and
/// evaluates on the test side.
pub fn evaluate_split(
    train_seqs: &[ActionSequence],
    test_seqs: &[ActionSequence],
    class_names: &[String],
    cfg: &PipelineConfig,
    dataset: &str,
    protocol: &str,
) -> Result<SplitArtifacts> {
    cfg.validate()?;
    if train_seqs.is_empty() || test_seqs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split has {} train / {} test sequences; both sides must be non-empty",
            train_seqs.len(),
            test_seqs.len()
        )));
    }
    let joint_count = train_seqs[0].joint_count();
    let scheme = PartitionScheme::for_joint_count(joint_count)?;
    let mut arch = cfg.arch.clone();
    arch.n_classes = class_names.len();
    arch.image_size = cfg.render.size;

    let all = PartLabel::ALL;
    let train_images = render_part_images(
        train_seqs,
        &scheme,
        &cfg.render,
        cfg.frames,
        &all,
        Some(&cfg.augment),
    )?;
    let test_images =
        render_part_images(test_seqs, &scheme, &cfg.render, cfg.frames, &all, None)?;
    // Fusion-weight tuning data for "validation" mode: the train sequences
    // rendered without augmentation.
    let tune_images = if cfg.fusion_mode == "validation" {
        Some(render_part_images(train_seqs, &scheme, &cfg.render, cfg.frames, &all, None)?)
    } else {
        None
    };

    let mut parts = Vec::new();
    let mut tune_preds: BTreeMap<PartLabel, PartPredictions> = BTreeMap::new();
    for &part in &all {
        let tcfg = TrainingConfig {
            seed: super::train::derive_seed(cfg.seed, &["part"], &[part as u64]),
            ..cfg.training.clone()
        };
        let (model, history) = train_part(&train_images[&part], &arch, &tcfg, part)?;
        let preds = predict_part(&model, &test_images[&part], part)?;
        if let Some(tune) = &tune_images {
            tune_preds.insert(part, predict_part(&model, &tune[&part], part)?);
        }
        parts.push((part, model, history, preds));
    }

    let fused_parts: [PartPredictions; 5] = PartLabel::PARTS.map(|p| {
        parts.iter().find(|(q, ..)| *q == p).expect("all parts trained").3.clone()
    });
    let (best_weights, _) = match &tune_preds.is_empty() {
        false => {
            let tune_parts: [PartPredictions; 5] =
                PartLabel::PARTS.map(|p| tune_preds[&p].clone());
            search_weights(&tune_parts)?
        }
        true => search_weights(&fused_parts)?,
    };
    let fused = fuse(best_weights, &fused_parts)?;
    let fused_accuracy = fused.accuracy();
    let confusion = confusion_matrix(&fused.predicted, &fused.labels, arch.n_classes)?;
    let macro_auc = match roc_auc(&fused.scores, &fused.labels, arch.n_classes) {
        Ok(r) => r.macro_auc,
        // Single-sequence LOOCV folds cannot host a ROC sweep.
        Err(_) => f64::NAN,
    };

    let part_accuracy = parts
        .iter()
        .map(|(p, _, _, preds)| {
            let predicted: Vec<usize> = preds.probs.iter().map(|r| super::argmax(r)).collect();
            (*p, accuracy(&predicted, &preds.labels))
        })
        .collect();

    let report = EvalReport {
        dataset: dataset.to_string(),
        protocol: protocol.to_string(),
        fusion_mode: cfg.fusion_mode.clone(),
        n_train: train_seqs.len(),
        n_test: test_seqs.len(),
        part_accuracy,
        best_weights,
        fused_accuracy,
        confusion,
        macro_auc,
        class_names: class_names.to_vec(),
    };
    Ok(SplitArtifacts { report, fused, parts })
}

/// Per-fold aggregation of one protocol row.
#[derive(Debug, Clone)]
pub struct EvalAggregate {
    pub name: String,
    pub n_folds: usize,
    /// Mean over folds, report order (FS first).
    pub part_accuracy: Vec<(PartLabel, f64)>,
    pub fused_accuracy: f64,
    pub best_weights: Vec<FusionWeights>,
    pub confusion: Vec<Vec<usize>>,
    pub macro_auc: f64,
    pub class_names: Vec<String>,
}

pub fn aggregate_folds(name: &str, folds: &[SplitArtifacts]) -> Result<EvalAggregate> {
    let first = folds
        .first()
        .ok_or_else(|| Error::InvalidArgument("no folds to aggregate".into()))?;
    let n_classes = first.report.class_names.len();
    let inv = 1.0 / folds.len() as f64;
    let mut part_accuracy: Vec<(PartLabel, f64)> =
        first.report.part_accuracy.iter().map(|&(p, _)| (p, 0.0)).collect();
    let mut fused_accuracy = 0.0;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut best_weights = Vec::new();
    for f in folds {
        for (acc, (_, a)) in part_accuracy.iter_mut().zip(&f.report.part_accuracy) {
            acc.1 += a * inv;
        }
        fused_accuracy += f.report.fused_accuracy * inv;
        for (r, row) in confusion.iter_mut().zip(&f.report.confusion) {
            for (c, v) in r.iter_mut().zip(row) {
                *c += v;
            }
        }
        scores.extend(f.fused.scores.iter().cloned());
        labels.extend_from_slice(&f.fused.labels);
        best_weights.push(f.report.best_weights);
    }
    let macro_auc = roc_auc(&scores, &labels, n_classes)?.macro_auc;
    Ok(EvalAggregate {
        name: name.to_string(),
        n_folds: folds.len(),
        part_accuracy,
        fused_accuracy,
        best_weights,
        confusion,
        macro_auc,
        class_names: first.report.class_names.clone(),
    })
}

/// A full protocol run: one row per evaluation unit (single row for most
/// datasets; AS1/AS2/AS3 plus Overall for MSR).
#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub dataset: String,
    pub protocol: String,
    pub fusion_mode: String,
    pub rows: Vec<EvalAggregate>,
}

impl ProtocolReport {
    /// The Table 3/4/5 row structure as CSV.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("row,FS,HS,LL,RL,LH,RH,fused,weights,macro_auc\n");
        for r in &self.rows {
            s.push_str(&r.name);
            for &(_, a) in &r.part_accuracy {
                s.push_str(&format!(",{a:.4}"));
            }
            let weights = r
                .best_weights
                .iter()
                .map(|w| w.to_string().replace(',', " "))
                .collect::<Vec<_>>()
                .join(";");
            s.push_str(&format!(",{:.4},{},{:.4}\n", r.fused_accuracy, weights, r.macro_auc));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[protocol]\n");
        s.push_str(&format!("dataset = {}\n", self.dataset));
        s.push_str(&format!("protocol = {}\n", self.protocol));
        s.push_str(&format!("fusion_mode = {}\n", self.fusion_mode));
        for r in &self.rows {
            s.push_str(&format!("\n[row {}]\n", r.name));
            s.push_str(&format!("n_folds = {}\n", r.n_folds));
            for (p, a) in &r.part_accuracy {
                s.push_str(&format!("accuracy_{p} = {a}\n"));
            }
            s.push_str(&format!("fused_accuracy = {}\n", r.fused_accuracy));
            s.push_str(&format!("macro_auc = {}\n", r.macro_auc));
            s.push_str("confusion:\n");
            s.push_str(&super::metrics::confusion_to_csv(&r.confusion, &r.class_names));
        }
        s
    }
}

fn run_folds(
    seqs: &[ActionSequence],
    class_names: &[String],
    cfg: &PipelineConfig,
    dataset: &str,
    protocol: &str,
    row: &str,
) -> Result<EvalAggregate> {
    let manifest =
        DatasetManifest::from_sequences(dataset, class_names, seqs[0].joint_count(), seqs);
    let spec = make_splits(&manifest, protocol)?;
    let by_id: BTreeMap<&str, &ActionSequence> =
        seqs.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut folds = Vec::new();
    for (i, fold) in spec.folds.iter().enumerate() {
        let pick = |ids: &[String]| -> Vec<ActionSequence> {
            ids.iter().map(|id| (*by_id[id.as_str()]).clone()).collect()
        };
        let fold_cfg = PipelineConfig {
            seed: super::train::derive_seed(cfg.seed, &["fold", row], &[i as u64]),
            ..cfg.clone()
        };
        folds.push(evaluate_split(
            &pick(&fold.train),
            &pick(&fold.test),
            class_names,
            &fold_cfg,
            dataset,
            protocol,
        )?);
    }
    aggregate_folds(row, &folds)
}

/// Runs the full protocol. MSR evaluates each AS subset independently
/// (8 remapped classes each) and adds an Overall row averaging them.
pub fn evaluate_protocol(
    seqs: &[ActionSequence],
    class_names: &[String],
    dataset: &str,
    protocol: &str,
    cfg: &PipelineConfig,
) -> Result<ProtocolReport> {
    cfg.validate()?;
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("no sequences to evaluate".into()));
    }
    let mut rows = Vec::new();
    if dataset == "msr" {
        for (name, actions) in MSR_SUBSETS {
            let subset_classes: Vec<String> =
                actions.iter().map(|&a| MSR_CLASSES[a - 1].to_string()).collect();
            let subset: Vec<ActionSequence> = seqs
                .iter()
                .filter(|s| s.subsets.iter().any(|t| t == name))
                .map(|s| {
                    let mut s = s.clone();
                    s.label = actions
                        .iter()
                        .position(|&a| a - 1 == s.label)
                        .expect("subset tag implies subset membership");
                    s
                })
                .collect();
            if subset.is_empty() {
                return Err(Error::InvalidArgument(format!("MSR subset {name} is empty")));
            }
            rows.push(run_folds(&subset, &subset_classes, cfg, dataset, protocol, name)?);
        }
        // Overall = mean of the subset rows (the Table 5 convention).
        let inv = 1.0 / rows.len() as f64;
        let overall = EvalAggregate {
            name: "Overall".into(),
            n_folds: rows.iter().map(|r| r.n_folds).sum(),
            part_accuracy: PartLabel::ALL
                .iter()
                .enumerate()
                .map(|(i, &p)| (p, rows.iter().map(|r| r.part_accuracy[i].1).sum::<f64>() * inv))
                .collect(),
            fused_accuracy: rows.iter().map(|r| r.fused_accuracy).sum::<f64>() * inv,
            best_weights: Vec::new(),
            confusion: Vec::new(),
            macro_auc: rows.iter().map(|r| r.macro_auc).sum::<f64>() * inv,
            class_names: Vec::new(),
        };
        rows.push(overall);
    } else {
        rows.push(run_folds(seqs, class_names, cfg, dataset, protocol, dataset)?);
    }
    Ok(ProtocolReport {
        dataset: dataset.to_string(),
        protocol: protocol.to_string(),
        fusion_mode: cfg.fusion_mode.clone(),
        rows,
    })
}
