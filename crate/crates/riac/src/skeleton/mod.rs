//! Dataset parsing and the canonical skeleton-sequence representation.

mod canonical;
mod florence;
mod msr;
mod partition;
mod resample;
mod splits;
mod utkinect;

pub use canonical::{read_manifest, read_sequence, write_corpus, write_sequence};
pub use florence::{parse_florence, FLORENCE_CLASSES};
pub use msr::{parse_msr, subsets_for_action, MsrLayout, MSR_CLASSES, MSR_SUBSETS};
pub use partition::{partition, PartTrajectory, PartitionScheme};
pub use resample::resample;
pub use splits::{make_splits, Fold, SplitSpec, PROTOCOLS};
pub use utkinect::{parse_utkinect, UTKINECT_CLASSES};

use crate::error::{Error, Result};

/// One 3D joint position in the dataset's world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Joint3D {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// All joints of one frame, in the dataset's documented joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub joints: Vec<Joint3D>,
}

/// One labeled skeleton recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    pub dataset: String,
    pub id: String,
    pub label: usize,
    pub subject: u32,
    pub trial: u32,
    pub frames: Vec<SkeletonFrame>,
    /// MSR activity-subset tags (AS1/AS2/AS3); empty elsewhere.
    pub subsets: Vec<String>,
}

impl ActionSequence {
    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.joints.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::DegenerateSequence(format!("sequence {} has no frames", self.id)));
        }
        let k = self.joint_count();
        for (i, f) in self.frames.iter().enumerate() {
            if f.joints.len() != k {
                return Err(Error::Shape(format!(
                    "sequence {} frame {i} has {} joints, expected {k}",
                    self.id,
                    f.joints.len()
                )));
            }
        }
        Ok(())
    }
}

/// The five body parts, plus the full-skeleton baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartLabel {
    Hs,
    Ll,
    Rl,
    Lh,
    Rh,
    Fs,
}

impl PartLabel {
    /// The five fused parts, in the fusion-weight order (HS, LL, RL, LH, RH).
    pub const PARTS: [PartLabel; 5] =
        [PartLabel::Hs, PartLabel::Ll, PartLabel::Rl, PartLabel::Lh, PartLabel::Rh];

    /// The parts plus FS, in report-column order.
    pub const ALL: [PartLabel; 6] = [
        PartLabel::Fs,
        PartLabel::Hs,
        PartLabel::Ll,
        PartLabel::Rl,
        PartLabel::Lh,
        PartLabel::Rh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PartLabel::Hs => "HS",
            PartLabel::Ll => "LL",
            PartLabel::Rl => "RL",
            PartLabel::Lh => "LH",
            PartLabel::Rh => "RH",
            PartLabel::Fs => "FS",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HS" => Ok(PartLabel::Hs),
            "LL" => Ok(PartLabel::Ll),
            "RL" => Ok(PartLabel::Rl),
            "LH" => Ok(PartLabel::Lh),
            "RH" => Ok(PartLabel::Rh),
            "FS" => Ok(PartLabel::Fs),
            _ => Err(Error::InvalidArgument(format!("unknown part label {s:?}"))),
        }
    }
}

impl std::fmt::Display for PartLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sequence entry of a [`DatasetManifest`].
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub subject: u32,
    pub trial: u32,
    pub path: Option<std::path::PathBuf>,
    pub subsets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset: String,
    pub class_names: Vec<String>,
    pub joint_count: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_sequences(
        dataset: &str,
        class_names: &[String],
        joint_count: usize,
        seqs: &[ActionSequence],
    ) -> Self {
        DatasetManifest {
            dataset: dataset.to_string(),
            class_names: class_names.to_vec(),
            joint_count,
            entries: seqs
                .iter()
                .map(|s| ManifestEntry {
                    id: s.id.clone(),
                    label: s.label,
                    subject: s.subject,
                    trial: s.trial,
                    path: None,
                    subsets: s.subsets.clone(),
                })
                .collect(),
        }
    }

    pub fn subject_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.entries.iter().map(|e| e.subject).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub(crate) fn parse_f64(
    tok: &str,
    file: &std::path::Path,
    line: usize,
) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(file, line, format!("malformed numeric token {tok:?}")))
}
