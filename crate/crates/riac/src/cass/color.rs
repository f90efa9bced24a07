use crate::error::{Error, Result};

/// Color of frame `t` out of `n`: hue interpolated linearly between the
/// configured endpoints at full saturation and value. With the default
/// 240 -> 0 sweep, frame 0 is pure blue and the last frame pure red.
pub fn temporal_color(t: usize, n: usize, hue_start: f64, hue_end: f64) -> Result<[u8; 3]> {
    if n < 2 {
        return Err(Error::DegenerateSequence(format!(
            "temporal color needs at least 2 frames, got {n}"
        )));
    }
    if t >= n {
        return Err(Error::InvalidArgument(format!("frame index {t} out of range 0..{n}")));
    }
    let hue = hue_start + (hue_end - hue_start) * t as f64 / (n - 1) as f64;
    Ok(hsv_to_rgb(hue.rem_euclid(360.0)))
}

/// HSV -> RGB at S = V = 1.
fn hsv_to_rgb(h: f64) -> [u8; 3] {
    let sector = (h / 60.0).floor() as i64 % 6;
    let f = h / 60.0 - (h / 60.0).floor();
    let q = ((1.0 - f) * 255.0).round() as u8;
    let t = (f * 255.0).round() as u8;
    match sector {
        0 => [255, t, 0],
        1 => [q, 255, 0],
        2 => [0, 255, t],
        3 => [0, q, 255],
        4 => [t, 0, 255],
        _ => [255, 0, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_colors() {
        assert_eq!(temporal_color(0, 60, 240.0, 0.0).unwrap(), [0, 0, 255]);
        assert_eq!(temporal_color(59, 60, 240.0, 0.0).unwrap(), [255, 0, 0]);
    }

    #[test]
    fn midpoint_is_green() {
        // t/(n-1) = 0.5 lands exactly on hue 120.
        assert_eq!(temporal_color(30, 61, 240.0, 0.0).unwrap(), [0, 255, 0]);
    }

    #[test]
    fn hue_monotone_in_t() {
        let n = 60;
        let hues: Vec<f64> =
            (0..n).map(|t| 240.0 + (0.0 - 240.0) * t as f64 / (n - 1) as f64).collect();
        assert!(hues.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn one_frame_rejected() {
        assert!(temporal_color(0, 1, 240.0, 0.0).is_err());
    }
}
