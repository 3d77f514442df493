//! Background parsing.

use std::sync::OnceLock;

use crate::autograd::sigmoid;
use crate::error::{Error, Result};
use crate::frame::{Frame, ParsingMap};
use crate::synthdata::{background_palette, hsv_to_rgb, EYE_WHITE, FACE_SV, HAIR_SV, MOUTH, PUPIL};

pub const DEFAULT_TAU: f32 = 0.05;

const HUE_STEPS: usize = 720;

struct Palettes {
    /// Background color segments `(a, b)`.
    background: Vec<([f32; 3], [f32; 3])>,
    foreground: Vec<[f32; 3]>,
}

fn palettes() -> &'static Palettes {
    static P: OnceLock<Palettes> = OnceLock::new();
    P.get_or_init(|| {
        let bg = background_palette();
        // background_palette lists 9 evenly spaced blends per pattern; the
        // endpoints of each run span the segment.
        let background = bg.chunks(9).map(|c| (c[0], c[8])).collect();
        let mut foreground = vec![EYE_WHITE, PUPIL, MOUTH];
        for k in 0..HUE_STEPS {
            let h = k as f32 / HUE_STEPS as f32;
            foreground.push(hsv_to_rgb(h, FACE_SV.0, FACE_SV.1));
            foreground.push(hsv_to_rgb(h, HAIR_SV.0, HAIR_SV.1));
        }
        Palettes { background, foreground }
    })
}

fn dist_to_segment(p: [f32; 3], a: [f32; 3], b: [f32; 3]) -> f32 {
    let ab: [f32; 3] = std::array::from_fn(|c| b[c] - a[c]);
    let ap: [f32; 3] = std::array::from_fn(|c| p[c] - a[c]);
    let len2: f32 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 { (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f32>() / len2).clamp(0.0, 1.0) } else { 0.0 };
    (0..3).map(|c| (ap[c] - t * ab[c]).powi(2)).sum::<f32>().sqrt()
}

fn dist_to_points(p: [f32; 3], pts: &[[f32; 3]]) -> f32 {
    pts.iter().map(|q| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f32>()).fold(f32::INFINITY, f32::min).sqrt()
}

/// Background probability of one color: `sigmoid((d_fg − d_bg)/τ)` with
/// `d_bg`, `d_fg` the distances to the background and foreground palettes.
pub fn background_probability(rgb: [f32; 3], tau: f32) -> f32 {
    let pal = palettes();
    let d_bg = pal.background.iter().map(|&(a, b)| dist_to_segment(rgb, a, b)).fold(f32::INFINITY, f32::min);
    let d_fg = dist_to_points(rgb, &pal.foreground);
    sigmoid((d_fg - d_bg) / tau)
}

/// Palette-distance background parser for rendered sprite frames.
pub fn parse_background_heuristic(frame: &Frame, tau: f32) -> Result<ParsingMap> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::config(format!("parse tau must be positive, got {tau}")));
    }
    let (w, h) = (frame.width(), frame.height());
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| background_probability(frame.rgb(x, y), tau))
        .collect();
    ParsingMap::new(w, h, data)
}

/// Ground-truth parsing: returns the supplied background mask.
pub fn parse_background(frame: &Frame, truth: Option<&ParsingMap>) -> Result<ParsingMap> {
    let m = truth.ok_or_else(|| Error::MissingInput("ground-truth parsing needs the scene's mask_bg".into()))?;
    if m.width() != frame.width() || m.height() != frame.height() {
        return Err(Error::dim("ground-truth mask and frame differ in size"));
    }
    Ok(m.clone())
}
