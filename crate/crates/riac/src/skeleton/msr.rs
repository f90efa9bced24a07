//! MSR Action 3D parser: per-sequence files `aAA_sSS_eEE_skeleton3D.txt`,
//! each frame a block of 20 rows of `x y z confidence`. Confidence values
//! are parsed and discarded. The 40-row screen+world variant (two rows per
//! joint, world coordinates second) is selectable.

use super::{ActionSequence, Joint3D, SkeletonFrame};
use crate::error::{Error, Result};
use std::path::Path;

pub const MSR_CLASSES: [&str; 20] = [
    "high_arm_wave",
    "horizontal_arm_wave",
    "hammer",
    "hand_catch",
    "forward_punch",
    "high_throw",
    "draw_x",
    "draw_tick",
    "draw_circle",
    "hand_clap",
    "two_hand_wave",
    "side_boxing",
    "bend",
    "forward_kick",
    "side_kick",
    "jogging",
    "tennis_swing",
    "tennis_serve",
    "golf_swing",
    "pickup_and_throw",
];

/// Activity subsets (1-based action ids, the Table-2 groupings).
pub const MSR_SUBSETS: [(&str, [usize; 8]); 3] = [
    ("AS1", [2, 3, 5, 6, 10, 13, 18, 20]),
    ("AS2", [2, 4, 7, 8, 9, 11, 14, 12]),
    ("AS3", [6, 14, 15, 16, 17, 18, 19, 20]),
];

const JOINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsrLayout {
    /// 20 rows per frame, world coordinates only.
    World20,
    /// 40 rows per frame: screen and world rows interleaved per joint,
    /// world coordinates taken from the second row of each pair.
    ScreenWorld40,
}

pub fn subsets_for_action(action_id: usize) -> Vec<String> {
    MSR_SUBSETS
        .iter()
        .filter(|(_, ids)| ids.contains(&action_id))
        .map(|(name, _)| name.to_string())
        .collect()
}

pub fn parse_msr(root: &Path, layout: MsrLayout) -> Result<Vec<ActionSequence>> {
    let mut files: Vec<std::path::PathBuf> = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with('a') && name.ends_with("_skeleton3D.txt") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no *_skeleton3D.txt files found"),
        ));
    }
    files.sort();
    files.iter().map(|f| parse_file(f, layout)).collect()
}

fn parse_file(path: &Path, layout: MsrLayout) -> Result<ActionSequence> {
    let name = path.file_stem().and_then(|n| n.to_str()).unwrap_or("");
    let (action_id, subject, trial) = parse_name(name)
        .ok_or_else(|| Error::parse(path, 0, format!("file name {name:?} is not aAA_sSS_eEE_skeleton3D")))?;
    if action_id == 0 || action_id > MSR_CLASSES.len() {
        return Err(Error::parse(
            path,
            0,
            format!("action id {action_id} outside 1..={}", MSR_CLASSES.len()),
        ));
    }

    let rows_per_frame = match layout {
        MsrLayout::World20 => JOINTS,
        MsrLayout::ScreenWorld40 => 2 * JOINTS,
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 4 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 4 values (x y z confidence), found {}", tok.len()),
            ));
        }
        rows.push([
            super::parse_f64(tok[0], path, lineno + 1)?,
            super::parse_f64(tok[1], path, lineno + 1)?,
            super::parse_f64(tok[2], path, lineno + 1)?,
        ]);
    }
    if rows.is_empty() || rows.len() % rows_per_frame != 0 {
        return Err(Error::parse(
            path,
            0,
            format!(
                "{} skeleton rows do not form whole frames of {rows_per_frame} rows",
                rows.len()
            ),
        ));
    }
    let frames: Vec<SkeletonFrame> = rows
        .chunks_exact(rows_per_frame)
        .map(|block| {
            let joints = (0..JOINTS)
                .map(|j| {
                    let r = match layout {
                        MsrLayout::World20 => block[j],
                        MsrLayout::ScreenWorld40 => block[2 * j + 1],
                    };
                    Joint3D { x: r[0], y: r[1], z: r[2] }
                })
                .collect();
            SkeletonFrame { joints }
        })
        .collect();

    Ok(ActionSequence {
        dataset: "msr".to_string(),
        id: format!("a{action_id:02}_s{subject:02}_e{trial:02}"),
        label: action_id - 1,
        subject,
        trial,
        frames,
        subsets: subsets_for_action(action_id),
    })
}

fn parse_name(stem: &str) -> Option<(usize, u32, u32)> {
    // aAA_sSS_eEE_skeleton3D
    let mut parts = stem.split('_');
    let a = parts.next()?.strip_prefix('a')?.parse().ok()?;
    let s = parts.next()?.strip_prefix('s')?.parse().ok()?;
    let e = parts.next()?.strip_prefix('e')?.parse().ok()?;
    Some((a, s, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn world20_file(n_frames: usize) -> String {
        let mut s = String::new();
        for f in 0..n_frames {
            for j in 0..JOINTS {
                writeln!(s, "{} {} {} 1", j as f64 * 0.1, f as f64, 2.0).unwrap();
            }
        }
        s
    }

    fn screenworld40_file(n_frames: usize) -> String {
        let mut s = String::new();
        for f in 0..n_frames {
            for j in 0..JOINTS {
                // Screen row first (should be ignored), world row second.
                writeln!(s, "900 900 900 1").unwrap();
                writeln!(s, "{} {} {} 1", j as f64 * 0.1, f as f64, 2.0).unwrap();
            }
        }
        s
    }

    #[test]
    fn world20_layout_parses_frames_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a02_s03_e01_skeleton3D.txt"), world20_file(3)).unwrap();
        let seqs = parse_msr(dir.path(), MsrLayout::World20).unwrap();
        assert_eq!(seqs.len(), 1);
        let s = &seqs[0];
        assert_eq!(s.id, "a02_s03_e01");
        assert_eq!(s.label, 1);
        assert_eq!((s.subject, s.trial), (3, 1));
        assert_eq!(s.frames.len(), 3);
        assert_eq!(s.joint_count(), 20);
        assert_eq!(s.frames[2].joints[5].y, 2.0);
        // Action 2 sits in AS1 and AS2 (Table 2).
        assert_eq!(s.subsets, vec!["AS1".to_string(), "AS2".to_string()]);
    }

    #[test]
    fn screenworld40_layout_takes_the_world_rows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a06_s01_e02_skeleton3D.txt"), screenworld40_file(2))
            .unwrap();
        let seqs = parse_msr(dir.path(), MsrLayout::ScreenWorld40).unwrap();
        let s = &seqs[0];
        assert_eq!(s.frames.len(), 2);
        assert_eq!(s.frames[0].joints[3].x, 3.0 * 0.1);
        assert!(s.frames.iter().all(|f| f.joints.iter().all(|j| j.x < 10.0)));
        assert_eq!(s.subsets, vec!["AS1".to_string(), "AS3".to_string()]);
    }

    #[test]
    fn partial_frames_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = world20_file(1);
        text.push_str("0.0 0.0 0.0 1\n"); // 21st row
        std::fs::write(dir.path().join("a01_s01_e01_skeleton3D.txt"), text).unwrap();
        assert!(parse_msr(dir.path(), MsrLayout::World20).is_err());
    }

    #[test]
    fn each_subset_holds_exactly_eight_actions() {
        for (name, actions) in MSR_SUBSETS {
            let mut unique = actions.to_vec();
            unique.sort_unstable();
            unique.dedup();
            assert_eq!(unique.len(), 8, "{name}");
            assert!(unique.iter().all(|&a| (1..=20).contains(&a)), "{name}");
            for a in actions {
                assert!(subsets_for_action(a).contains(&name.to_string()));
            }
        }
    }
}
