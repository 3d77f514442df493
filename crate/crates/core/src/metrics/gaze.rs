use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::synthdata::EyeBox;

/// Pixels whose centers fall inside `b`, as inclusive index ranges.
fn box_pixels(frame: &Frame, b: &EyeBox) -> Result<(usize, usize, usize, usize)> {
    let (w, h) = (frame.width() as f32, frame.height() as f32);
    let finite = [b.x0, b.y0, b.x1, b.y1].iter().all(|v| v.is_finite());
    if !finite || b.x0 > b.x1 || b.y0 > b.y1 || b.x0 < -0.5 || b.y0 < -0.5 || b.x1 > w - 0.5 || b.y1 > h - 0.5 {
        return Err(Error::config(format!("eye box {b:?} is not inside the {w}x{h} frame")));
    }
    let x0 = b.x0.ceil().max(0.0) as usize;
    let y0 = b.y0.ceil().max(0.0) as usize;
    let x1 = b.x1.floor() as isize;
    let y1 = b.y1.floor() as isize;
    if x1 < x0 as isize || y1 < y0 as isize {
        return Err(Error::config(format!("eye box {b:?} contains no pixel centers")));
    }
    Ok((x0, y0, x1 as usize, y1 as usize))
}

/// Centroid of the darkest pixels inside the box minus the box center. A
/// uniform box has no darkest pixel and yields `(0, 0)`.
pub fn pupil_offset(frame: &Frame, b: &EyeBox) -> Result<(f32, f32)> {
    let (x0, y0, x1, y1) = box_pixels(frame, b)?;
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let l = frame.luma(x, y);
            min = min.min(l);
            max = max.max(l);
        }
    }
    if min == max {
        return Ok((0.0, 0.0));
    }
    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if frame.luma(x, y) == min {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    let (cx, cy) = b.center();
    Ok(((sx / n as f64) as f32 - cx, (sy / n as f64) as f32 - cy))
}

/// Mean over the given eyes of the distance between the pupil offsets
/// detected in `src` and in `out`.
pub fn gaze_distance(src: &Frame, out: &Frame, eye_boxes: &[EyeBox]) -> Result<f32> {
    src.check_same_shape(out, "gaze_distance")?;
    if eye_boxes.is_empty() {
        return Err(Error::config("gaze_distance needs at least one eye box"));
    }
    let mut total = 0.0;
    for b in eye_boxes {
        let (ax, ay) = pupil_offset(src, b)?;
        let (bx, by) = pupil_offset(out, b)?;
        total += ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
    }
    Ok(total / eye_boxes.len() as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{render_video, sample_scene, Trajectory};

    #[test]
    fn identical_frames_have_zero_distance() {
        let scene = sample_scene(1, 1, 64).unwrap();
        let (video, truth) = render_video(&scene).unwrap();
        let f = &video.frames()[0];
        assert_eq!(gaze_distance(f, f, &truth.eye_boxes[0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_eye_region_uses_center() {
        let f = Frame::filled(16, 16, [0.4; 3]);
        let b = EyeBox { x0: 2.0, y0: 2.0, x1: 9.0, y1: 6.0 };
        assert_eq!(pupil_offset(&f, &b).unwrap(), (0.0, 0.0));
        assert_eq!(gaze_distance(&f, &f, &[b]).unwrap(), 0.0);
    }

    #[test]
    fn box_outside_frame_is_config_error() {
        let f = Frame::black(8, 8);
        let b = EyeBox { x0: 5.0, y0: 1.0, x1: 12.0, y1: 3.0 };
        assert!(matches!(gaze_distance(&f, &f, &[b]), Err(Error::Config(_))));
    }

    #[test]
    fn pupil_shift_of_two_pixels_is_measured() {
        // Two renders of the same head that differ only in a constant gaze
        // chosen so the pupils sit exactly 2 px apart horizontally.
        let mut scene = sample_scene(12, 1, 128).unwrap();
        scene.identity.face_size = 0.5;
        scene.motion.gaze_y = Trajectory::constant(0.0);
        scene.motion.center_x = Trajectory::constant(64.0);
        scene.motion.center_y = Trajectory::constant(64.0);
        let r = scene.identity.face_size * 128.0 / 2.0 * scene.motion.scale.at(0.0);
        let travel = 0.9 * (0.22 * r - 0.55 * 0.18 * r);
        scene.motion.gaze_x = Trajectory::constant(-1.0 / travel);
        let (a, truth) = render_video(&scene).unwrap();
        scene.motion.gaze_x = Trajectory::constant(1.0 / travel);
        let (b, truth_b) = render_video(&scene).unwrap();
        assert_eq!(truth.eye_boxes, truth_b.eye_boxes);
        let d = gaze_distance(&a.frames()[0], &b.frames()[0], &truth.eye_boxes[0]).unwrap();
        assert!((d - 2.0).abs() <= 0.5, "{d}");
    }
}
