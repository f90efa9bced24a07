use super::{ActionSequence, Joint3D, SkeletonFrame};
use crate::error::{Error, Result};

/// Resamples a sequence to exactly `target_len` frames by linear
/// interpolation at the uniform fractional positions
/// `t_i = i * (n - 1) / (T - 1)`. Works in both directions; when the
/// length already matches, the input is returned unchanged.
pub fn resample(seq: &ActionSequence, target_len: usize) -> Result<ActionSequence> {
    if seq.frames.len() < 2 {
        return Err(Error::DegenerateSequence(format!(
            "sequence {} has {} frame(s); at least 2 required for resampling",
            seq.id,
            seq.frames.len()
        )));
    }
    if target_len < 2 {
        return Err(Error::InvalidArgument(format!(
            "target length must be at least 2, got {target_len}"
        )));
    }
    if seq.frames.len() == target_len {
        return Ok(seq.clone());
    }
    let n = seq.frames.len();
    let k = seq.joint_count();
    let mut frames = Vec::with_capacity(target_len);
    for i in 0..target_len {
        let t = i as f64 * (n - 1) as f64 / (target_len - 1) as f64;
        let lo = t.floor() as usize;
        let hi = lo.min(n - 2) + 1;
        let frac = t - lo as f64;
        let mut joints = Vec::with_capacity(k);
        for j in 0..k {
            let a = seq.frames[lo].joints[j];
            let b = seq.frames[hi].joints[j];
            joints.push(Joint3D {
                x: a.x + (b.x - a.x) * frac,
                y: a.y + (b.y - a.y) * frac,
                z: a.z + (b.z - a.z) * frac,
            });
        }
        frames.push(SkeletonFrame { joints });
    }
    // Endpoints are exact copies by construction.
    frames[0] = seq.frames[0].clone();
    frames[target_len - 1] = seq.frames[n - 1].clone();
    Ok(ActionSequence { frames, ..seq.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> ActionSequence {
        // One joint moving linearly 0 -> 1 in x over the sequence.
        let frames = (0..n)
            .map(|t| SkeletonFrame {
                joints: vec![Joint3D { x: t as f64 / (n - 1) as f64, y: 0.25, z: 3.0 }],
            })
            .collect();
        ActionSequence {
            dataset: "test".into(),
            id: "ramp".into(),
            label: 0,
            subject: 1,
            trial: 1,
            frames,
            subsets: Vec::new(),
        }
    }

    #[test]
    fn downsample_and_upsample_hit_the_target_length_exactly() {
        for n in [120usize, 5] {
            let out = resample(&ramp(n), 60).unwrap();
            assert_eq!(out.frames.len(), 60);
            assert_eq!(out.frames[0], ramp(n).frames[0]);
            assert_eq!(out.frames[59], ramp(n).frames[n - 1]);
        }
    }

    #[test]
    fn same_length_is_bit_identical() {
        let seq = ramp(60);
        assert_eq!(resample(&seq, 60).unwrap(), seq);
    }

    #[test]
    fn two_frame_ramp_interpolates_linearly() {
        // Resampling a 2-frame 0 -> 1 ramp to 60 frames puts frame i at
        // i / 59; spot-check the middle.
        let out = resample(&ramp(2), 60).unwrap();
        assert!((out.frames[30].joints[0].x - 30.0 / 59.0).abs() < 1e-15);
        assert_eq!(out.frames[0].joints[0].x, 0.0);
        assert_eq!(out.frames[59].joints[0].x, 1.0);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let mut seq = ramp(2);
        seq.frames.truncate(1);
        assert!(resample(&seq, 60).is_err());
        assert!(resample(&ramp(10), 1).is_err());
    }
}
