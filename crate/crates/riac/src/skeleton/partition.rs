use super::{ActionSequence, Joint3D, PartLabel};
use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Mapping from part label to an ordered joint-index list. The five parts
/// are pairwise disjoint and cover the full joint set; FS is implicit (all
/// joints in index order).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionScheme {
    pub joint_count: usize,
    parts: Vec<(PartLabel, Vec<usize>)>,
}

impl PartitionScheme {
    pub fn new(joint_count: usize, parts: Vec<(PartLabel, Vec<usize>)>) -> Result<Self> {
        let scheme = PartitionScheme { joint_count, parts };
        scheme.check_cover()?;
        Ok(scheme)
    }

    /// The 20-joint grouping: HS = {J4, J3, J2, J1}, LH = {J5..J8},
    /// RH = {J9..J12}, LL = {J13..J16}, RL = {J17..J20} (1-based labels).
    pub fn kinect20() -> Self {
        PartitionScheme {
            joint_count: 20,
            parts: vec![
                (PartLabel::Hs, vec![3, 2, 1, 0]),
                (PartLabel::Ll, vec![12, 13, 14, 15]),
                (PartLabel::Rl, vec![16, 17, 18, 19]),
                (PartLabel::Lh, vec![4, 5, 6, 7]),
                (PartLabel::Rh, vec![8, 9, 10, 11]),
            ],
        }
    }

    /// The 15-joint grouping for Florence skeletons, by joint name:
    /// HS = head/neck/spine, each limb = its shoulder-elbow-wrist or
    /// hip-knee-ankle chain.
    pub fn florence15() -> Self {
        PartitionScheme {
            joint_count: 15,
            parts: vec![
                (PartLabel::Hs, vec![0, 1, 2]),
                (PartLabel::Ll, vec![9, 10, 11]),
                (PartLabel::Rl, vec![12, 13, 14]),
                (PartLabel::Lh, vec![3, 4, 5]),
                (PartLabel::Rh, vec![6, 7, 8]),
            ],
        }
    }

    pub fn for_joint_count(joint_count: usize) -> Result<Self> {
        match joint_count {
            20 => Ok(Self::kinect20()),
            15 => Ok(Self::florence15()),
            _ => Err(Error::InvalidArgument(format!(
                "no partition scheme for {joint_count}-joint skeletons (20 and 15 supported)"
            ))),
        }
    }

    /// Joint indices for a part, in chain order; FS returns all joints.
    pub fn indices(&self, part: PartLabel) -> Vec<usize> {
        if part == PartLabel::Fs {
            return (0..self.joint_count).collect();
        }
        self.parts
            .iter()
            .find(|(p, _)| *p == part)
            .map(|(_, idx)| idx.clone())
            .unwrap_or_default()
    }

    fn check_cover(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (p, idx) in &self.parts {
            if idx.is_empty() {
                return Err(Error::InvalidArgument(format!("part {p} is empty")));
            }
            for &j in idx {
                if j >= self.joint_count {
                    return Err(Error::InvalidArgument(format!(
                        "part {p} references joint {j} outside 0..{}",
                        self.joint_count
                    )));
                }
                if !seen.insert(j) {
                    return Err(Error::InvalidArgument(format!(
                        "joint {j} appears in more than one part"
                    )));
                }
            }
        }
        if seen.len() != self.joint_count {
            return Err(Error::InvalidArgument(format!(
                "parts cover {} of {} joints",
                seen.len(),
                self.joint_count
            )));
        }
        Ok(())
    }
}

/// One part's joint trajectories: rows in the scheme's joint order, one
/// column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PartTrajectory {
    pub part: PartLabel,
    /// `joints[row][frame]`
    pub joints: Vec<Vec<Joint3D>>,
}

impl PartTrajectory {
    pub fn n_frames(&self) -> usize {
        self.joints.first().map_or(0, |r| r.len())
    }
}

/// Extracts the per-part trajectory matrices of a sequence, FS included.
pub fn partition(
    seq: &ActionSequence,
    scheme: &PartitionScheme,
) -> Result<Vec<PartTrajectory>> {
    if seq.joint_count() != scheme.joint_count {
        return Err(Error::Shape(format!(
            "sequence {} has {} joints but scheme expects {}",
            seq.id,
            seq.joint_count(),
            scheme.joint_count
        )));
    }
    PartLabel::ALL
        .iter()
        .map(|&part| {
            let idx = scheme.indices(part);
            let joints = idx
                .iter()
                .map(|&j| seq.frames.iter().map(|f| f.joints[j]).collect())
                .collect();
            Ok(PartTrajectory { part, joints })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::SkeletonFrame;

    #[test]
    fn builtin_schemes_partition_the_joint_set() {
        for scheme in [PartitionScheme::kinect20(), PartitionScheme::florence15()] {
            scheme.check_cover().unwrap();
            let per_part = scheme.joint_count / 5;
            let mut seen = BTreeSet::new();
            for part in PartLabel::PARTS {
                let idx = scheme.indices(part);
                assert_eq!(idx.len(), per_part, "{part}");
                seen.extend(idx);
            }
            assert_eq!(seen.len(), scheme.joint_count);
            assert_eq!(
                scheme.indices(PartLabel::Fs),
                (0..scheme.joint_count).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn overlapping_or_partial_schemes_are_rejected() {
        let overlap = PartitionScheme::new(
            4,
            vec![
                (PartLabel::Hs, vec![0, 1]),
                (PartLabel::Ll, vec![1, 2]),
                (PartLabel::Rl, vec![3]),
                (PartLabel::Lh, vec![0]),
                (PartLabel::Rh, vec![2]),
            ],
        );
        assert!(overlap.is_err());
        let partial =
            PartitionScheme::new(4, vec![(PartLabel::Hs, vec![0, 1]), (PartLabel::Ll, vec![2])]);
        assert!(partial.is_err());
    }

    #[test]
    fn partition_extracts_rows_in_chain_order() {
        let scheme = PartitionScheme::kinect20();
        let frames: Vec<SkeletonFrame> = (0..3)
            .map(|t| SkeletonFrame {
                joints: (0..20)
                    .map(|j| Joint3D { x: j as f64, y: t as f64, z: 0.0 })
                    .collect(),
            })
            .collect();
        let seq = ActionSequence {
            dataset: "test".into(),
            id: "p".into(),
            label: 0,
            subject: 1,
            trial: 1,
            frames,
            subsets: Vec::new(),
        };
        let trajs = partition(&seq, &scheme).unwrap();
        assert_eq!(trajs.len(), 6);
        let hs = trajs.iter().find(|t| t.part == PartLabel::Hs).unwrap();
        // HS runs head-ward: J4, J3, J2, J1 (1-based) = indices 3, 2, 1, 0.
        assert_eq!(hs.joints.iter().map(|r| r[0].x).collect::<Vec<_>>(), vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(hs.n_frames(), 3);
        let fs = trajs.iter().find(|t| t.part == PartLabel::Fs).unwrap();
        assert_eq!(fs.joints.len(), 20);
    }

    #[test]
    fn joint_count_mismatch_is_an_error() {
        let scheme = PartitionScheme::kinect20();
        let seq = ActionSequence {
            dataset: "test".into(),
            id: "short".into(),
            label: 0,
            subject: 1,
            trial: 1,
            frames: vec![SkeletonFrame {
                joints: vec![Joint3D { x: 0.0, y: 0.0, z: 0.0 }; 15],
            }],
            subsets: Vec::new(),
        };
        assert!(partition(&seq, &scheme).is_err());
    }
}
