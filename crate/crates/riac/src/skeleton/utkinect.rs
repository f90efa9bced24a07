//! UT Kinect Action 3D parser.
//!
//! Layout: per-recording joint files `joints_sXX_eYY.txt` (either directly
//! under the root or in a `joints/` subdirectory), one line per frame:
//! frame number followed by 60 reals (20 joints x 3). An `actionLabel.txt`
//! annotation file gives, per recording, the inclusive frame interval of
//! each action instance; frames outside every interval are dropped.

use super::{ActionSequence, Joint3D, SkeletonFrame};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const UTKINECT_CLASSES: [&str; 10] = [
    "walk", "sitDown", "standUp", "pickUp", "carry", "throw", "push", "pull", "waveHands",
    "clapHands",
];

const JOINTS: usize = 20;

struct Interval {
    recording: String,
    action: String,
    start: u64,
    end: u64,
}

pub fn parse_utkinect(root: &Path) -> Result<Vec<ActionSequence>> {
    let label_path = find_file(root, "actionLabel.txt")?;
    let intervals = parse_action_labels(&label_path)?;

    // Joint files keyed by recording id (sXX_eYY).
    let mut frames_by_recording: BTreeMap<String, BTreeMap<u64, SkeletonFrame>> = BTreeMap::new();
    for dir in [root.to_path_buf(), root.join("joints")] {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if let Some(rec) = name.strip_prefix("joints_").and_then(|n| n.strip_suffix(".txt")) {
                frames_by_recording.insert(rec.to_string(), parse_joint_file(&path)?);
            }
        }
    }
    if frames_by_recording.is_empty() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no joints_*.txt files found"),
        ));
    }

    let mut sequences = Vec::new();
    for iv in intervals {
        let Some(frames) = frames_by_recording.get(&iv.recording) else {
            return Err(Error::io(
                root,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("missing joint file for recording {}", iv.recording),
                ),
            ));
        };
        let label = UTKINECT_CLASSES
            .iter()
            .position(|c| *c == iv.action)
            .ok_or_else(|| {
                Error::parse(&label_path, 0, format!("unknown action name {:?}", iv.action))
            })?;
        let seq_frames: Vec<SkeletonFrame> = frames
            .range(iv.start..=iv.end)
            .map(|(_, f)| f.clone())
            .collect();
        if seq_frames.is_empty() {
            continue;
        }
        let (subject, trial) = parse_recording_id(&iv.recording)
            .ok_or_else(|| Error::parse(&label_path, 0, format!("bad recording id {}", iv.recording)))?;
        sequences.push(ActionSequence {
            dataset: "utkinect".to_string(),
            id: format!("{}_{}", iv.recording, iv.action),
            label,
            subject,
            trial,
            frames: seq_frames,
            subsets: Vec::new(),
        });
    }
    Ok(sequences)
}

fn find_file(root: &Path, name: &str) -> Result<PathBuf> {
    for candidate in [root.join(name), root.join("actionLabel").join(name)] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::io(
        root.join(name),
        std::io::Error::new(std::io::ErrorKind::NotFound, "annotation file not found"),
    ))
}

fn parse_recording_id(rec: &str) -> Option<(u32, u32)> {
    // sXX_eYY
    let (s, e) = rec.split_once('_')?;
    let subject = s.strip_prefix('s')?.parse().ok()?;
    let trial = e.strip_prefix('e')?.parse().ok()?;
    Some((subject, trial))
}

fn parse_joint_file(path: &Path) -> Result<BTreeMap<u64, SkeletonFrame>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frames = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 1 + 3 * JOINTS {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected {} tokens (frame number + 60 reals), found {}", 1 + 3 * JOINTS, tok.len()),
            ));
        }
        let frame_no: u64 = tok[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, "malformed frame number"))?;
        let mut joints = Vec::with_capacity(JOINTS);
        for c in tok[1..].chunks_exact(3) {
            joints.push(Joint3D {
                x: super::parse_f64(c[0], path, lineno + 1)?,
                y: super::parse_f64(c[1], path, lineno + 1)?,
                z: super::parse_f64(c[2], path, lineno + 1)?,
            });
        }
        frames.insert(frame_no, SkeletonFrame { joints });
    }
    Ok(frames)
}

fn parse_action_labels(path: &Path) -> Result<Vec<Interval>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut intervals = Vec::new();
    let mut recording = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !line.contains(':') {
            recording = line.to_string();
            continue;
        }
        let (action, rest) = line.split_once(':').unwrap();
        let tok: Vec<&str> = rest.split_whitespace().collect();
        if tok.len() != 2 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("interval needs start and end, found {} token(s)", tok.len()),
            ));
        }
        // Missing annotations are marked NaN in the distribution; skip them.
        if tok[0].eq_ignore_ascii_case("nan") || tok[1].eq_ignore_ascii_case("nan") {
            continue;
        }
        if recording.is_empty() {
            return Err(Error::parse(path, lineno + 1, "interval before any recording id"));
        }
        let start: u64 =
            tok[0].parse().map_err(|_| Error::parse(path, lineno + 1, "malformed start frame"))?;
        let end: u64 =
            tok[1].parse().map_err(|_| Error::parse(path, lineno + 1, "malformed end frame"))?;
        intervals.push(Interval {
            recording: recording.clone(),
            action: action.trim().to_string(),
            start,
            end,
        });
    }
    Ok(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn joint_line(frame: u64) -> String {
        let mut line = frame.to_string();
        for j in 0..JOINTS {
            write!(line, " {} {} {}", j as f64 * 0.1, frame as f64 * 0.01, 3.0).unwrap();
        }
        line
    }

    fn write_fixture(root: &Path) {
        std::fs::write(
            root.join("actionLabel.txt"),
            "s01_e01\n  walk: 10 14\n  sitDown: 20 24\n  throw: NaN NaN\n\
             s02_e02\n  waveHands: 11 13\n",
        )
        .unwrap();
        for (rec, range) in [("s01_e01", 10..=30u64), ("s02_e02", 11..=13)] {
            let mut text = String::new();
            for f in range {
                text.push_str(&joint_line(f));
                text.push('\n');
            }
            std::fs::write(root.join(format!("joints_{rec}.txt")), text).unwrap();
        }
    }

    #[test]
    fn parses_intervals_into_labeled_sequences() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let seqs = parse_utkinect(dir.path()).unwrap();
        assert_eq!(seqs.len(), 3); // the NaN interval is skipped

        let walk = seqs.iter().find(|s| s.id == "s01_e01_walk").unwrap();
        assert_eq!(walk.label, 0);
        assert_eq!((walk.subject, walk.trial), (1, 1));
        assert_eq!(walk.frames.len(), 5); // inclusive interval 10..=14
        assert_eq!(walk.joint_count(), 20);
        assert_eq!(walk.frames[0].joints[1].x, 0.1);

        let sit = seqs.iter().find(|s| s.id == "s01_e01_sitDown").unwrap();
        assert_eq!(sit.label, 1);

        let wave = seqs.iter().find(|s| s.id == "s02_e02_waveHands").unwrap();
        assert_eq!(wave.label, 8);
        assert_eq!((wave.subject, wave.trial), (2, 2));
        assert_eq!(wave.frames.len(), 3);
    }

    #[test]
    fn joint_files_in_a_subdirectory_are_found() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("actionLabel.txt"), "s01_e01\n  walk: 1 2\n").unwrap();
        let sub = dir.path().join("joints");
        std::fs::create_dir(&sub).unwrap();
        std::fs::write(
            sub.join("joints_s01_e01.txt"),
            format!("{}\n{}\n", joint_line(1), joint_line(2)),
        )
        .unwrap();
        assert_eq!(parse_utkinect(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn malformed_joint_rows_cite_the_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("actionLabel.txt"), "s01_e01\n  walk: 1 1\n").unwrap();
        std::fs::write(dir.path().join("joints_s01_e01.txt"), "1 0.5 0.5\n").unwrap();
        let err = parse_utkinect(dir.path()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn missing_annotation_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(parse_utkinect(dir.path()), Err(Error::Io { .. })));
    }
}
