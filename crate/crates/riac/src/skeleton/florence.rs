//! Florence 3D Actions parser: a single world-coordinates text file, each
//! line `gesture_id actor_id category_id` followed by 45 reals (15 joints
//! x 3). Consecutive lines sharing a gesture id form one sequence.

use super::{ActionSequence, Joint3D, SkeletonFrame};
use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::path::Path;

pub const FLORENCE_CLASSES: [&str; 9] = [
    "wave", "drink", "answer_phone", "clap", "tight_lace", "sit_down", "stand_up", "read_watch",
    "bow",
];

const JOINTS: usize = 15;

pub fn parse_florence(file: &Path) -> Result<Vec<ActionSequence>> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let mut sequences: Vec<ActionSequence> = Vec::new();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut current: Option<(u64, ActionSequence)> = None;

    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 + 3 * JOINTS {
            return Err(Error::parse(
                file,
                lineno + 1,
                format!("expected {} tokens, found {}", 3 + 3 * JOINTS, tok.len()),
            ));
        }
        let gesture: u64 =
            tok[0].parse().map_err(|_| Error::parse(file, lineno + 1, "malformed gesture id"))?;
        let actor: u32 =
            tok[1].parse().map_err(|_| Error::parse(file, lineno + 1, "malformed actor id"))?;
        let category: usize =
            tok[2].parse().map_err(|_| Error::parse(file, lineno + 1, "malformed category id"))?;
        if category == 0 || category > FLORENCE_CLASSES.len() {
            return Err(Error::parse(
                file,
                lineno + 1,
                format!("category id {category} outside 1..={}", FLORENCE_CLASSES.len()),
            ));
        }
        let mut joints = Vec::with_capacity(JOINTS);
        for c in tok[3..].chunks_exact(3) {
            joints.push(Joint3D {
                x: super::parse_f64(c[0], file, lineno + 1)?,
                y: super::parse_f64(c[1], file, lineno + 1)?,
                z: super::parse_f64(c[2], file, lineno + 1)?,
            });
        }
        let frame = SkeletonFrame { joints };

        match &mut current {
            Some((gid, seq)) if *gid == gesture => seq.frames.push(frame),
            _ => {
                if let Some((_, seq)) = current.take() {
                    sequences.push(seq);
                }
                if !seen.insert(gesture) {
                    return Err(Error::parse(
                        file,
                        lineno + 1,
                        format!("gesture id {gesture} reappears after other gestures; lines of one gesture must be contiguous"),
                    ));
                }
                current = Some((
                    gesture,
                    ActionSequence {
                        dataset: "florence".to_string(),
                        id: format!("g{gesture:03}"),
                        label: category - 1,
                        subject: actor,
                        trial: gesture as u32,
                        frames: vec![frame],
                        subsets: Vec::new(),
                    },
                ));
            }
        }
    }
    if let Some((_, seq)) = current.take() {
        sequences.push(seq);
    }
    if sequences.is_empty() {
        return Err(Error::parse(file, 1, "file holds no skeleton lines"));
    }
    Ok(sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn line(gesture: u64, actor: u32, category: usize, frame: usize) -> String {
        let mut s = format!("{gesture} {actor} {category}");
        for j in 0..JOINTS {
            write!(s, " {} {} {}", j as f64, frame as f64 * 0.1, 2.0).unwrap();
        }
        s
    }

    #[test]
    fn contiguous_gesture_lines_group_into_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("florence.txt");
        let mut text = String::new();
        for f in 0..4 {
            text.push_str(&line(1, 2, 3, f));
            text.push('\n');
        }
        for f in 0..2 {
            text.push_str(&line(2, 5, 9, f));
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();

        let seqs = parse_florence(&path).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].id, "g001");
        assert_eq!(seqs[0].label, 2); // category 3, zero-based
        assert_eq!(seqs[0].subject, 2);
        assert_eq!(seqs[0].frames.len(), 4);
        assert_eq!(seqs[0].joint_count(), 15);
        assert_eq!(seqs[1].label, 8);
        assert_eq!(seqs[1].frames.len(), 2);
    }

    #[test]
    fn split_gesture_blocks_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("florence.txt");
        let text = format!("{}\n{}\n{}\n", line(1, 1, 1, 0), line(2, 1, 1, 0), line(1, 1, 1, 1));
        std::fs::write(&path, text).unwrap();
        let err = parse_florence(&path).unwrap_err();
        assert!(err.to_string().contains("contiguous"), "{err}");
    }

    #[test]
    fn out_of_range_category_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("florence.txt");
        std::fs::write(&path, format!("{}\n", line(1, 1, 10, 0))).unwrap();
        assert!(parse_florence(&path).is_err());
    }

    #[test]
    fn wrong_token_count_cites_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("florence.txt");
        std::fs::write(&path, format!("{}\n1 2 3 0.5\n", line(1, 1, 1, 0))).unwrap();
        let err = parse_florence(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
