use super::{temporal_color, CassImage, RenderConfig};
use crate::error::{Error, Result};
use crate::skeleton::PartTrajectory;

/// Renders one part's trajectory matrix into a CASS image.
///
/// Joints are projected orthographically onto the world x-y plane,
/// normalized by the part's own bounding box over the whole sequence
/// (aspect ratio preserved, margin inset), and each frame's joint chain is
/// drawn as line segments colored by frame time. Later frames draw over
/// earlier ones. Output is deterministic.
pub fn render_cass(
    traj: &PartTrajectory,
    config: &RenderConfig,
    sequence_id: &str,
) -> Result<CassImage> {
    config.validate()?;
    let n_frames = traj.n_frames();
    if n_frames < 2 {
        return Err(Error::DegenerateSequence(format!(
            "part {} of {sequence_id} has {n_frames} frame(s); at least 2 required",
            traj.part
        )));
    }
    for row in &traj.joints {
        for j in row {
            if !j.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite joint coordinate in {sequence_id} part {}",
                    traj.part
                )));
            }
        }
    }

    // Bounding box of the x-y projection over the whole sequence.
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in &traj.joints {
        for j in row {
            min_x = min_x.min(j.x);
            max_x = max_x.max(j.x);
            min_y = min_y.min(j.y);
            max_y = max_y.max(j.y);
        }
    }
    let span_x = max_x - min_x;
    let span_y = max_y - min_y;
    let size = config.size as f64;
    let inset = size * (1.0 - 2.0 * config.margin);
    // Uniform scale keeps the aspect ratio; a fully degenerate box maps
    // every joint to the image center.
    let span = span_x.max(span_y);
    let scale = if span > 0.0 { inset / span } else { 0.0 };
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;

    let to_pixel = |x: f64, y: f64| -> (f64, f64) {
        // World y grows upward, image rows grow downward.
        let px = size / 2.0 + (x - cx) * scale;
        let py = size / 2.0 - (y - cy) * scale;
        (px, py)
    };

    let mut img = CassImage::new(config.size, traj.part, sequence_id);
    let rows = traj.joints.len();
    for t in 0..n_frames {
        let rgb = temporal_color(t, n_frames, config.hue_start, config.hue_end)?;
        if rows == 1 {
            let (px, py) = to_pixel(traj.joints[0][t].x, traj.joints[0][t].y);
            stamp(&mut img, px, py, rgb, config.line_width);
            continue;
        }
        for r in 0..rows - 1 {
            let (x0, y0) = to_pixel(traj.joints[r][t].x, traj.joints[r][t].y);
            let (x1, y1) = to_pixel(traj.joints[r + 1][t].x, traj.joints[r + 1][t].y);
            draw_segment(&mut img, x0, y0, x1, y1, rgb, config.line_width);
        }
    }
    Ok(img)
}

fn stamp(img: &mut CassImage, px: f64, py: f64, rgb: [u8; 3], width: usize) {
    let half = (width - 1) as isize / 2;
    let x0 = px.round() as isize;
    let y0 = py.round() as isize;
    for dy in -half..=half + (width as isize - 1) % 2 {
        for dx in -half..=half + (width as isize - 1) % 2 {
            let (x, y) = (x0 + dx, y0 + dy);
            if x >= 0 && y >= 0 && (x as usize) < img.width && (y as usize) < img.height {
                img.put(x as usize, y as usize, rgb);
            }
        }
    }
}

/// Bresenham over rounded endpoints.
fn draw_segment(img: &mut CassImage, x0: f64, y0: f64, x1: f64, y1: f64, rgb: [u8; 3], width: usize) {
    let mut x = x0.round() as isize;
    let mut y = y0.round() as isize;
    let xe = x1.round() as isize;
    let ye = y1.round() as isize;
    let dx = (xe - x).abs();
    let dy = -(ye - y).abs();
    let sx = if x < xe { 1 } else { -1 };
    let sy = if y < ye { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        stamp(img, x as f64, y as f64, rgb, width);
        if x == xe && y == ye {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{Joint3D, PartLabel};

    /// Two joints drifting right over four frames; frames stay spatially
    /// separated so each frame's color survives the overdraw.
    pub(crate) fn two_joint_four_frame() -> PartTrajectory {
        let j = |x: f64, y: f64| Joint3D { x, y, z: 1.0 };
        PartTrajectory {
            part: PartLabel::Lh,
            joints: vec![
                vec![j(0.0, 0.0), j(1.0, 0.0), j(2.0, 0.0), j(3.0, 0.0)],
                vec![j(0.0, 1.0), j(1.0, 1.0), j(2.0, 1.0), j(3.0, 1.0)],
            ],
        }
    }

    #[test]
    fn render_is_deterministic_and_temporally_colored() {
        let traj = two_joint_four_frame();
        let cfg = RenderConfig { size: 32, ..RenderConfig::default() };
        let img = render_cass(&traj, &cfg, "fixture").unwrap();
        assert_eq!(render_cass(&traj, &cfg, "fixture").unwrap(), img);

        let colors: Vec<[u8; 3]> = img
            .pixels
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .filter(|c| c != &[0, 0, 0])
            .collect();
        // First frame pure blue, last frame pure red (hue 240 -> 0).
        assert!(colors.contains(&[0, 0, 255]));
        assert!(colors.contains(&[255, 0, 0]));
    }

    #[test]
    fn margin_keeps_the_border_black() {
        let traj = two_joint_four_frame();
        let cfg = RenderConfig { size: 40, margin: 0.10, ..RenderConfig::default() };
        let img = render_cass(&traj, &cfg, "fixture").unwrap();
        for i in 0..img.width {
            assert_eq!(img.get(i, 0), [0, 0, 0]);
            assert_eq!(img.get(i, img.height - 1), [0, 0, 0]);
            assert_eq!(img.get(0, i), [0, 0, 0]);
            assert_eq!(img.get(img.width - 1, i), [0, 0, 0]);
        }
    }

    #[test]
    fn degenerate_trajectories_are_rejected() {
        let mut traj = two_joint_four_frame();
        for row in &mut traj.joints {
            row.truncate(1);
        }
        let cfg = RenderConfig::default();
        assert!(render_cass(&traj, &cfg, "one-frame").is_err());

        let mut bad = two_joint_four_frame();
        bad.joints[0][2].x = f64::NAN;
        assert!(render_cass(&bad, &cfg, "nan").is_err());
    }

    #[test]
    fn stationary_part_collapses_to_the_center() {
        let j = Joint3D { x: 0.4, y: 0.4, z: 1.0 };
        let traj = PartTrajectory { part: PartLabel::Hs, joints: vec![vec![j; 4]] };
        let cfg = RenderConfig { size: 16, ..RenderConfig::default() };
        let img = render_cass(&traj, &cfg, "still").unwrap();
        // Only the last frame's color remains at the center.
        assert_eq!(img.get(8, 8), [255, 0, 0]);
    }
}
