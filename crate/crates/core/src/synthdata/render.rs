//! Point-sampled sprite renderer with analytic ground truth.
//!
//! Every pixel takes the flat color of the region its center falls in (the
//! background is a smooth plaid), so warping the previous frame by the exact
//! motion reproduces the current frame wherever the four bilinear taps stay
//! inside the same region.

use std::f32::consts::TAU;

use serde::{Deserialize, Serialize};

use super::scene::SceneParams;
use crate::error::Result;
use crate::frame::{FlowField, Frame, Mask, ParsingMap, VideoSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Background,
    Hair,
    Face,
    Mouth,
    Eye,
    Pupil,
}

impl Region {
    /// Regions whose appearance moves rigidly with the head or background.
    fn flow_exact(self) -> bool {
        matches!(self, Region::Background | Region::Hair | Region::Face)
    }
}

/// Axis-aligned eye box in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeBox {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl EyeBox {
    pub fn center(&self) -> (f32, f32) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Eye {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    px: f32,
    py: f32,
    pr: f32,
}

/// Sprite geometry at one instant.
#[derive(Clone, Debug)]
pub struct SpriteGeometry {
    t: f32,
    cx: f32,
    cy: f32,
    scale: f32,
    r: f32,
    hair_half_width: f32,
    hair_top: f32,
    hair_bottom: f32,
    wave_amp: f32,
    wave_len: f32,
    wave_phase: f32,
    eyes: [Eye; 2],
    mouth: (f32, f32, f32, f32),
    bg: (f32, f32),
    pattern: u8,
}

struct BgPalette {
    a: [f32; 3],
    b: [f32; 3],
    wavelength: (f32, f32),
}

const BACKGROUNDS: [BgPalette; 4] = [
    BgPalette { a: [0.62, 0.66, 0.70], b: [0.80, 0.82, 0.84], wavelength: (16.0, 20.0) },
    BgPalette { a: [0.70, 0.68, 0.62], b: [0.86, 0.84, 0.78], wavelength: (14.0, 18.0) },
    BgPalette { a: [0.60, 0.64, 0.62], b: [0.78, 0.82, 0.80], wavelength: (20.0, 13.0) },
    BgPalette { a: [0.66, 0.64, 0.70], b: [0.82, 0.80, 0.86], wavelength: (18.0, 16.0) },
];

pub(crate) const EYE_WHITE: [f32; 3] = [0.96, 0.96, 0.94];
pub(crate) const PUPIL: [f32; 3] = [0.05, 0.04, 0.06];
pub(crate) const MOUTH: [f32; 3] = [0.55, 0.12, 0.15];
pub(crate) const FACE_SV: (f32, f32) = (0.45, 0.85);
pub(crate) const HAIR_SV: (f32, f32) = (0.7, 0.45);

/// Every color the background can take: the two plaid endpoints of each
/// pattern and evenly spaced blends between them.
pub(crate) fn background_palette() -> Vec<[f32; 3]> {
    let mut out = Vec::new();
    for p in &BACKGROUNDS {
        for k in 0..=8 {
            let m = k as f32 / 8.0;
            out.push(std::array::from_fn(|c| p.a[c] + m * (p.b[c] - p.a[c])));
        }
    }
    out
}

pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// `(hue, saturation, value)` with hue in `[0, 1)`.
pub fn rgb_to_hsv([r, g, b]: [f32; 3]) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h.rem_euclid(1.0), s, max)
}

fn in_ellipse(x: f32, y: f32, cx: f32, cy: f32, rx: f32, ry: f32) -> bool {
    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    dx * dx + dy * dy <= 1.0
}

impl SpriteGeometry {
    pub fn at(scene: &SceneParams, t: f32) -> Self {
        let m = &scene.motion;
        let id = &scene.identity;
        let size = scene.size as f32;
        let scale = m.scale.at(t);
        let r = id.face_size * size / 2.0 * scale;
        let cx = m.center_x.at(t);
        let cy = m.center_y.at(t);
        let gx = m.gaze_x.at(t).clamp(-1.0, 1.0);
        let gy = m.gaze_y.at(t).clamp(-1.0, 1.0);
        let eye_offset = id.eye_spacing * 0.8 * (2.0 * r);
        let (rx, ry) = (0.22 * r, 0.18 * r);
        let pr = 0.55 * ry;
        let eye = |side: f32| {
            let ex = cx + side * eye_offset;
            let ey = cy - 0.2 * r;
            Eye { cx: ex, cy: ey, rx, ry, px: ex + gx * 0.9 * (rx - pr), py: ey + gy * 0.9 * (ry - pr), pr }
        };
        let mouth_open = m.mouth.at(t).clamp(0.0, 1.0);
        Self {
            t,
            cx,
            cy,
            scale,
            r,
            hair_half_width: 1.2 * r,
            hair_top: cy - 1.15 * r,
            hair_bottom: cy - 0.3 * r + id.hair_length * size * scale,
            wave_amp: 0.12 * r,
            wave_len: 0.8 * r,
            wave_phase: m.hair_phase.at(t),
            eyes: [eye(-1.0), eye(1.0)],
            mouth: (cx, cy + 0.45 * r, 0.35 * r, (0.05 + 0.15 * mouth_open) * r),
            bg: scene.background.velocity,
            pattern: scene.background.pattern,
        }
    }

    pub fn region(&self, x: f32, y: f32) -> Region {
        for e in &self.eyes {
            if in_ellipse(x, y, e.cx, e.cy, e.rx, e.ry) {
                let (dx, dy) = (x - e.px, y - e.py);
                return if dx * dx + dy * dy <= e.pr * e.pr { Region::Pupil } else { Region::Eye };
            }
        }
        let (mx, my, mrx, mry) = self.mouth;
        if in_ellipse(x, y, mx, my, mrx, mry) {
            return Region::Mouth;
        }
        let (dx, dy) = (x - self.cx, y - self.cy);
        if dx * dx + dy * dy <= self.r * self.r {
            return Region::Face;
        }
        if (x - self.cx).abs() <= self.hair_half_width && y >= self.hair_top {
            let bottom =
                self.hair_bottom + self.wave_amp * (TAU * (x - self.cx) / self.wave_len + self.wave_phase).sin();
            if y <= bottom {
                return Region::Hair;
            }
        }
        Region::Background
    }

    fn background_color(&self, x: f32, y: f32) -> [f32; 3] {
        let p = &BACKGROUNDS[self.pattern as usize];
        let u = x + self.t * self.bg.0;
        let v = y + self.t * self.bg.1;
        let mix = 0.5 + 0.25 * (TAU * u / p.wavelength.0).sin() + 0.25 * (TAU * v / p.wavelength.1).sin();
        std::array::from_fn(|c| p.a[c] + mix * (p.b[c] - p.a[c]))
    }

    fn color(&self, scene: &SceneParams, region: Region, x: f32, y: f32) -> [f32; 3] {
        match region {
            Region::Background => self.background_color(x, y),
            Region::Hair => hsv_to_rgb(scene.identity.hair_hue, HAIR_SV.0, HAIR_SV.1),
            Region::Face => hsv_to_rgb(scene.identity.face_hue, FACE_SV.0, FACE_SV.1),
            Region::Mouth => MOUTH,
            Region::Eye => EYE_WHITE,
            Region::Pupil => PUPIL,
        }
    }

    /// Backward displacement of the point `(x, y)` of this instant to where
    /// it sat at `prev`.
    fn displacement(&self, prev: &SpriteGeometry, region: Region, x: f32, y: f32) -> (f32, f32) {
        match region {
            Region::Background => self.bg,
            _ => {
                let k = prev.scale / self.scale;
                (prev.cx + k * (x - self.cx) - x, prev.cy + k * (y - self.cy) - y)
            }
        }
    }

    pub fn eye_boxes(&self) -> [EyeBox; 2] {
        self.eyes.map(|e| EyeBox { x0: e.cx - e.rx, y0: e.cy - e.ry, x1: e.cx + e.rx, y1: e.cy + e.ry })
    }

    /// Pupil center minus eye center, per eye.
    pub fn gaze_px(&self) -> [(f32, f32); 2] {
        self.eyes.map(|e| (e.px - e.cx, e.py - e.cy))
    }
}

/// Exact per-frame ground truth accompanying a rendered video.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneTruth {
    /// Backward flow from frame `t` to frame `t − 1`. Frame 0's flow points
    /// into the (unrendered) instant `t = −1`.
    pub flow_gt: Vec<FlowField>,
    /// Pixels where the analytic flow reproduces the frame. Always empty for
    /// frame 0, which has no predecessor in the video.
    pub flow_valid: Vec<Mask>,
    pub mask_bg: Vec<ParsingMap>,
    pub gaze_px: Vec<[(f32, f32); 2]>,
    pub eye_boxes: Vec<[EyeBox; 2]>,
    pub identity_vec: [f32; 5],
}

fn render_frame(scene: &SceneParams, geo: &SpriteGeometry) -> (Frame, Vec<Region>) {
    let n = scene.size;
    let mut frame = Frame::black(n, n);
    let mut labels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f32, y as f32);
            let region = geo.region(fx, fy);
            labels.push(region);
            frame.set_rgb(x, y, geo.color(scene, region, fx, fy));
        }
    }
    (frame, labels)
}

fn flow_truth(
    scene: &SceneParams,
    geo: &SpriteGeometry,
    prev: &SpriteGeometry,
    labels: &[Region],
    check_valid: bool,
) -> (FlowField, Mask) {
    let n = scene.size;
    let mut flow = FlowField::zeros(n, n);
    let mut valid = Mask::filled(n, n, false);
    for y in 0..n {
        for x in 0..n {
            let region = labels[y * n + x];
            let (fx, fy) = (x as f32, y as f32);
            let (dx, dy) = geo.displacement(prev, region, fx, fy);
            flow.set(x, y, (dx, dy));
            let (sx, sy) = (fx + dx, fy + dy);
            if !check_valid || !region.flow_exact() {
                continue;
            }
            if sx < 0.0 || sy < 0.0 || sx > (n - 1) as f32 || sy > (n - 1) as f32 {
                continue;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            let taps = [(x0, y0), (x0 + 1.0, y0), (x0, y0 + 1.0), (x0 + 1.0, y0 + 1.0)];
            let consistent = taps.iter().all(|&(tx, ty)| {
                let tx = tx.min((n - 1) as f32);
                let ty = ty.min((n - 1) as f32);
                prev.region(tx, ty) == region
            });
            valid.data[y * n + x] = consistent;
        }
    }
    (flow, valid)
}

/// Renders every frame of `scene` together with its ground truth.
pub fn render_video(scene: &SceneParams) -> Result<(VideoSequence, SceneTruth)> {
    scene.validate()?;
    let n = scene.size;
    let mut frames = Vec::with_capacity(scene.num_frames);
    let mut truth = SceneTruth {
        flow_gt: Vec::new(),
        flow_valid: Vec::new(),
        mask_bg: Vec::new(),
        gaze_px: Vec::new(),
        eye_boxes: Vec::new(),
        identity_vec: scene.identity.descriptor(),
    };
    let mut prev = SpriteGeometry::at(scene, -1.0);
    for t in 0..scene.num_frames {
        let geo = SpriteGeometry::at(scene, t as f32);
        let (frame, labels) = render_frame(scene, &geo);
        let (flow, valid) = flow_truth(scene, &geo, &prev, &labels, t > 0);
        let bg: Vec<f32> = labels.iter().map(|&r| if r == Region::Background { 1.0 } else { 0.0 }).collect();
        truth.mask_bg.push(ParsingMap::new(n, n, bg)?);
        truth.flow_gt.push(flow);
        truth.flow_valid.push(valid);
        truth.gaze_px.push(geo.gaze_px());
        truth.eye_boxes.push(geo.eye_boxes());
        frames.push(frame);
        prev = geo;
    }
    Ok((VideoSequence::new(frames, scene.fps)?, truth))
}

/// Region labels of frame `t`, as the renderer sees them.
pub fn region_labels(scene: &SceneParams, t: usize) -> Vec<Region> {
    let geo = SpriteGeometry::at(scene, t as f32);
    let n = scene.size;
    (0..n * n).map(|i| geo.region((i % n) as f32, (i / n) as f32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowwarp::warp::backward_warp;
    use crate::synthdata::scene::{sample_scene, Sinusoid, Trajectory};

    fn max_valid_warp_error(video: &VideoSequence, truth: &SceneTruth) -> f32 {
        let mut worst = 0.0f32;
        for t in 1..video.num_frames() {
            let warped = backward_warp(&video.frames()[t - 1], &truth.flow_gt[t]).unwrap();
            let cur = &video.frames()[t];
            let valid = &truth.flow_valid[t];
            for y in 0..cur.height() {
                for x in 0..cur.width() {
                    if valid.get(x, y) {
                        for c in 0..3 {
                            worst = worst.max((warped.get(c, x, y) - cur.get(c, x, y)).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    #[test]
    fn rendering_is_pure() {
        let scene = sample_scene(3, 6, 64).unwrap();
        let (a, ta) = render_video(&scene).unwrap();
        let (b, tb) = render_video(&scene).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn flow_is_exact_on_valid_pixels() {
        for seed in 0..6 {
            let scene = sample_scene(seed, 8, 64).unwrap();
            let (video, truth) = render_video(&scene).unwrap();
            let worst = max_valid_warp_error(&video, &truth);
            assert!(worst < 2.0 / 255.0, "seed {seed}: {worst}");
            assert!(truth.flow_valid[3].count() > 64 * 64 / 2);
        }
    }

    #[test]
    fn background_flow_equals_scroll_velocity() {
        let scene = sample_scene(11, 5, 64).unwrap();
        let (_, truth) = render_video(&scene).unwrap();
        let (vx, vy) = scene.background.velocity;
        for (flow, mask) in truth.flow_gt.iter().zip(&truth.mask_bg) {
            for y in 0..64 {
                for x in 0..64 {
                    if mask.get(x, y) == 1.0 {
                        assert_eq!(flow.get(x, y), (vx, vy));
                    }
                }
            }
        }
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let mut scene = sample_scene(5, 4, 64).unwrap();
        let m = &mut scene.motion;
        m.center_x = Trajectory::constant(32.0);
        m.center_y = Trajectory::constant(32.0);
        m.scale = Trajectory::constant(1.0);
        scene.background.velocity = (0.0, 0.0);
        let (_, truth) = render_video(&scene).unwrap();
        for t in 1..4 {
            for y in 0..64 {
                for x in 0..64 {
                    if truth.flow_valid[t].get(x, y) {
                        assert_eq!(truth.flow_gt[t].get(x, y), (0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn unit_translation_gives_minus_one_flow() {
        let mut scene = sample_scene(9, 3, 64).unwrap();
        scene.identity.face_size = 0.3;
        let w = 0.05f32;
        // amp·sin(w) = 1 makes frames 0→1 move exactly +1 px.
        scene.motion.center_x =
            Trajectory { offset: 32.0, terms: vec![Sinusoid { amp: 1.0 / w.sin(), freq: w, phase: 0.0 }] };
        scene.motion.center_y = Trajectory::constant(32.0);
        scene.motion.scale = Trajectory::constant(1.0);
        scene.background.velocity = (0.0, 0.0);
        let (video, truth) = render_video(&scene).unwrap();
        let labels = region_labels(&scene, 1);
        let mut checked = 0;
        for y in 0..64 {
            for x in 0..64 {
                if truth.flow_valid[1].get(x, y) && labels[y * 64 + x] != Region::Background {
                    let (dx, dy) = truth.flow_gt[1].get(x, y);
                    assert!((dx + 1.0).abs() < 1e-4 && dy == 0.0, "({dx}, {dy})");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
        assert!(max_valid_warp_error(&video, &truth) < 2.0 / 255.0);
    }

    #[test]
    fn background_mask_matches_geometry() {
        let scene = sample_scene(2, 3, 64).unwrap();
        let (_, truth) = render_video(&scene).unwrap();
        for t in 0..3 {
            let labels = region_labels(&scene, t);
            for (i, r) in labels.iter().enumerate() {
                let bg = truth.mask_bg[t].data()[i];
                assert_eq!(bg == 1.0, *r == Region::Background);
                assert!(bg == 0.0 || bg == 1.0);
            }
        }
    }

    #[test]
    fn darkest_pixel_centroid_recovers_gaze() {
        for seed in 0..10 {
            let scene = sample_scene(seed, 4, 64).unwrap();
            let (video, truth) = render_video(&scene).unwrap();
            for t in 0..4 {
                let f = &video.frames()[t];
                for (eye, b) in truth.eye_boxes[t].iter().enumerate() {
                    let (cx, cy) = crate::metrics::pupil_offset(f, b).unwrap();
                    let (gx, gy) = truth.gaze_px[t][eye];
                    let err = ((cx - gx).powi(2) + (cy - gy).powi(2)).sqrt();
                    assert!(err <= 1.0, "seed {seed} t {t} eye {eye}: {err}");
                }
            }
        }
    }

    #[test]
    fn hsv_round_trip() {
        for &(h, s, v) in &[(0.1, 0.5, 0.8), (0.6, 0.3, 0.4), (0.95, 0.7, 0.9)] {
            let (h2, s2, v2) = rgb_to_hsv(hsv_to_rgb(h, s, v));
            assert!((h - h2).abs() < 1e-5 && (s - s2).abs() < 1e-5 && (v - v2).abs() < 1e-5);
        }
    }
}
