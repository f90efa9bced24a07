//! Canonical on-disk corpus: one whitespace-delimited text file per
//! sequence (header line: dataset, class, subject, trial, n_frames,
//! n_joints; then one line of 3*n_joints reals per frame) plus a manifest
//! with one line per sequence.

use super::{
    ActionSequence, DatasetManifest, Joint3D, ManifestEntry, SkeletonFrame,
};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub fn write_sequence(path: &Path, seq: &ActionSequence) -> Result<()> {
    seq.validate()?;
    let mut text = format!(
        "{} {} {} {} {} {}\n",
        seq.dataset,
        seq.label,
        seq.subject,
        seq.trial,
        seq.frames.len(),
        seq.joint_count()
    );
    for f in &seq.frames {
        let mut first = true;
        for j in &f.joints {
            if !first {
                text.push(' ');
            }
            write!(text, "{} {} {}", j.x, j.y, j.z).unwrap();
            first = false;
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_sequence(path: &Path, id: &str) -> Result<ActionSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty sequence file"))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 6 {
        return Err(Error::parse(path, 1, format!("header has {} fields, expected 6", tok.len())));
    }
    let dataset = tok[0].to_string();
    let label: usize =
        tok[1].parse().map_err(|_| Error::parse(path, 1, "malformed class index"))?;
    let subject: u32 =
        tok[2].parse().map_err(|_| Error::parse(path, 1, "malformed subject id"))?;
    let trial: u32 = tok[3].parse().map_err(|_| Error::parse(path, 1, "malformed trial id"))?;
    let n_frames: usize =
        tok[4].parse().map_err(|_| Error::parse(path, 1, "malformed frame count"))?;
    let n_joints: usize =
        tok[5].parse().map_err(|_| Error::parse(path, 1, "malformed joint count"))?;

    let mut frames = Vec::with_capacity(n_frames);
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 3 * n_joints {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected {} values, found {}", 3 * n_joints, vals.len()),
            ));
        }
        let mut joints = Vec::with_capacity(n_joints);
        for c in vals.chunks_exact(3) {
            joints.push(Joint3D {
                x: super::parse_f64(c[0], path, lineno + 1)?,
                y: super::parse_f64(c[1], path, lineno + 1)?,
                z: super::parse_f64(c[2], path, lineno + 1)?,
            });
        }
        frames.push(SkeletonFrame { joints });
    }
    if frames.len() != n_frames {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {n_frames} frames, file holds {}", frames.len()),
        ));
    }
    Ok(ActionSequence {
        dataset,
        id: id.to_string(),
        label,
        subject,
        trial,
        frames,
        subsets: Vec::new(),
    })
}

/// Writes every sequence as a canonical file under `out_dir` and a
/// `manifest.txt` beside them. Returns the manifest with paths filled in.
pub fn write_corpus(
    out_dir: &Path,
    dataset: &str,
    class_names: &[String],
    joint_count: usize,
    seqs: &[ActionSequence],
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = DatasetManifest {
        dataset: dataset.to_string(),
        class_names: class_names.to_vec(),
        joint_count,
        entries: Vec::with_capacity(seqs.len()),
    };
    let manifest_path = out_dir.join("manifest.txt");
    let mut mf = std::fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    writeln!(mf, "# dataset {dataset}").map_err(|e| Error::io(&manifest_path, e))?;
    writeln!(mf, "# joints {joint_count}").map_err(|e| Error::io(&manifest_path, e))?;
    writeln!(mf, "# classes {}", class_names.join(",")).map_err(|e| Error::io(&manifest_path, e))?;
    for seq in seqs {
        let file = out_dir.join(format!("{}.txt", seq.id));
        write_sequence(&file, seq)?;
        let mut line = format!(
            "{} {} {} {} {}",
            seq.id,
            seq.label,
            seq.subject,
            seq.trial,
            file.display()
        );
        if !seq.subsets.is_empty() {
            line.push(' ');
            line.push_str(&seq.subsets.join(","));
        }
        writeln!(mf, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
        manifest.entries.push(ManifestEntry {
            id: seq.id.clone(),
            label: seq.label,
            subject: seq.subject,
            trial: seq.trial,
            path: Some(file),
            subsets: seq.subsets.clone(),
        });
    }
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dataset = String::new();
    let mut joint_count = 0usize;
    let mut class_names = Vec::new();
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut tok = rest.split_whitespace();
            match tok.next() {
                Some("dataset") => dataset = tok.next().unwrap_or("").to_string(),
                Some("joints") => {
                    joint_count = tok
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::parse(path, lineno + 1, "malformed joint count"))?
                }
                Some("classes") => {
                    class_names = tok
                        .next()
                        .unwrap_or("")
                        .split(',')
                        .map(str::to_string)
                        .collect()
                }
                _ => {}
            }
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 5 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("manifest line has {} fields, expected at least 5", tok.len()),
            ));
        }
        entries.push(ManifestEntry {
            id: tok[0].to_string(),
            label: tok[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "malformed class index"))?,
            subject: tok[2]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "malformed subject id"))?,
            trial: tok[3]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "malformed trial id"))?,
            path: Some(PathBuf::from(tok[4])),
            subsets: tok
                .get(5)
                .map(|s| s.split(',').map(str::to_string).collect())
                .unwrap_or_default(),
        });
    }
    Ok(DatasetManifest { dataset, class_names, joint_count, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthetic_corpus, SYNTHETIC_CLASSES, SYNTHETIC_JOINTS};

    #[test]
    fn corpus_round_trips_through_the_canonical_format() {
        let dir = tempfile::tempdir().unwrap();
        let seqs = synthetic_corpus(2, 8, 5);
        let classes: Vec<String> = SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect();
        let manifest =
            write_corpus(dir.path(), "synthetic", &classes, SYNTHETIC_JOINTS, &seqs).unwrap();
        assert_eq!(manifest.entries.len(), seqs.len());

        let reloaded = read_manifest(&dir.path().join("manifest.txt")).unwrap();
        assert_eq!(reloaded.dataset, "synthetic");
        assert_eq!(reloaded.joint_count, SYNTHETIC_JOINTS);
        assert_eq!(reloaded.class_names, classes);
        assert_eq!(reloaded.entries.len(), seqs.len());

        for (entry, orig) in reloaded.entries.iter().zip(&seqs) {
            assert_eq!(entry.id, orig.id);
            let back = read_sequence(entry.path.as_ref().unwrap(), &entry.id).unwrap();
            assert_eq!(&back, orig);
        }
    }

    #[test]
    fn subset_tags_survive_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut seqs = synthetic_corpus(1, 4, 0);
        seqs[0].subsets = vec!["AS1".into(), "AS3".into()];
        let classes: Vec<String> = SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect();
        write_corpus(dir.path(), "msr", &classes, SYNTHETIC_JOINTS, &seqs).unwrap();
        let reloaded = read_manifest(&dir.path().join("manifest.txt")).unwrap();
        assert_eq!(reloaded.entries[0].subsets, vec!["AS1".to_string(), "AS3".to_string()]);
        assert!(reloaded.entries[1].subsets.is_empty());
    }

    #[test]
    fn frame_count_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let seq = &synthetic_corpus(1, 4, 0)[0];
        let path = dir.path().join("s.txt");
        write_sequence(&path, seq).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(3).collect();
        std::fs::write(&path, truncated.join("\n")).unwrap();
        assert!(read_sequence(&path, "s").is_err());
    }
}
