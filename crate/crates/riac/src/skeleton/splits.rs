use super::DatasetManifest;
use crate::error::{Error, Result};

pub const PROTOCOLS: [&str; 3] = ["loocv-sequence", "loocv-subject", "cross-subject"];

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub protocol: String,
    pub folds: Vec<Fold>,
}

/// Builds evaluation folds over the manifest's sequence ids.
///
/// `cross-subject` is the single odd/even split: train subjects
/// {1,3,5,7,9}, test subjects {2,4,6,8,10}. `loocv-sequence` yields one
/// fold per sequence, `loocv-subject` one fold per subject.
pub fn make_splits(manifest: &DatasetManifest, protocol: &str) -> Result<SplitSpec> {
    let folds = match protocol {
        "cross-subject" => {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for e in &manifest.entries {
                if e.subject % 2 == 1 {
                    train.push(e.id.clone());
                } else {
                    test.push(e.id.clone());
                }
            }
            vec![Fold { train, test }]
        }
        "loocv-sequence" => manifest
            .entries
            .iter()
            .map(|held| Fold {
                train: manifest
                    .entries
                    .iter()
                    .filter(|e| e.id != held.id)
                    .map(|e| e.id.clone())
                    .collect(),
                test: vec![held.id.clone()],
            })
            .collect(),
        "loocv-subject" => manifest
            .subject_ids()
            .into_iter()
            .map(|subject| {
                let (mut train, mut test) = (Vec::new(), Vec::new());
                for e in &manifest.entries {
                    if e.subject == subject {
                        test.push(e.id.clone());
                    } else {
                        train.push(e.id.clone());
                    }
                }
                Fold { train, test }
            })
            .collect(),
        _ => {
            return Err(Error::UnknownProtocol {
                name: protocol.to_string(),
                valid: PROTOCOLS.join(", "),
            })
        }
    };
    Ok(SplitSpec { protocol: protocol.to_string(), folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::ManifestEntry;

    fn manifest(n_subjects: u32, trials_per_subject: u32) -> DatasetManifest {
        let mut entries = Vec::new();
        for s in 1..=n_subjects {
            for t in 1..=trials_per_subject {
                entries.push(ManifestEntry {
                    id: format!("s{s:02}_e{t:02}"),
                    label: (t % 3) as usize,
                    subject: s,
                    trial: t,
                    path: None,
                    subsets: Vec::new(),
                });
            }
        }
        DatasetManifest {
            dataset: "test".into(),
            class_names: vec!["a".into(), "b".into(), "c".into()],
            joint_count: 20,
            entries,
        }
    }

    #[test]
    fn cross_subject_is_odd_train_even_test() {
        let m = manifest(10, 2);
        let spec = make_splits(&m, "cross-subject").unwrap();
        assert_eq!(spec.folds.len(), 1);
        let fold = &spec.folds[0];
        assert_eq!(fold.train.len() + fold.test.len(), m.entries.len());
        let subject = |id: &str| id[1..3].parse::<u32>().unwrap();
        assert!(fold.train.iter().all(|id| subject(id) % 2 == 1));
        assert!(fold.test.iter().all(|id| subject(id) % 2 == 0));
    }

    #[test]
    fn loocv_sequence_holds_out_each_sequence_once() {
        let m = manifest(4, 5);
        let spec = make_splits(&m, "loocv-sequence").unwrap();
        assert_eq!(spec.folds.len(), 20);
        let mut held: Vec<&str> = spec.folds.iter().map(|f| f.test[0].as_str()).collect();
        held.sort_unstable();
        held.dedup();
        assert_eq!(held.len(), 20);
        for f in &spec.folds {
            assert_eq!(f.test.len(), 1);
            assert_eq!(f.train.len(), 19);
            assert!(!f.train.contains(&f.test[0]));
        }
    }

    #[test]
    fn loocv_subject_holds_out_each_subject_once() {
        let m = manifest(4, 5);
        let spec = make_splits(&m, "loocv-subject").unwrap();
        assert_eq!(spec.folds.len(), 4);
        for f in &spec.folds {
            assert_eq!(f.test.len(), 5);
            assert_eq!(f.train.len(), 15);
        }
    }

    #[test]
    fn unknown_protocol_names_the_valid_ones() {
        let err = make_splits(&manifest(2, 2), "bogus").unwrap_err();
        let msg = err.to_string();
        for p in PROTOCOLS {
            assert!(msg.contains(p), "{msg}");
        }
    }
}
