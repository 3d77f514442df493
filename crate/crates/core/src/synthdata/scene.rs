use std::f32::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUPPORTED_SIZES: [usize; 3] = [32, 64, 128];
pub const DEFAULT_FPS: f32 = 25.0;
/// Largest head scale any trajectory may reach.
pub const MAX_HEAD_SCALE: f32 = 1.05;
/// Largest background displacement per frame, in pixels.
pub const MAX_BG_SPEED: f32 = 2.0;

/// Fixed per-scene appearance. Sizes are fractions: `face_size` of the image
/// width, `eye_spacing` of the face size, `hair_length` of the image height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub face_hue: f32,
    pub face_size: f32,
    pub eye_spacing: f32,
    pub hair_hue: f32,
    pub hair_length: f32,
}

impl IdentityParams {
    /// The identity as a 5-vector with every component rescaled to `[0, 1]`.
    pub fn descriptor(&self) -> [f32; 5] {
        [
            self.face_hue,
            (self.face_size - 0.3) / 0.2,
            (self.eye_spacing - 0.2) / 0.2,
            self.hair_hue,
            (self.hair_length - 0.1) / 0.2,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amp: f32,
    /// Angular frequency in radians per frame.
    pub freq: f32,
    pub phase: f32,
}

/// `offset + Σ amp·sin(freq·t + phase)` over at most three terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub offset: f32,
    pub terms: Vec<Sinusoid>,
}

impl Trajectory {
    pub fn constant(offset: f32) -> Self {
        Self { offset, terms: Vec::new() }
    }

    /// Value at (possibly fractional or negative) frame time `t`.
    pub fn at(&self, t: f32) -> f32 {
        self.offset + self.terms.iter().map(|s| s.amp * (s.freq * t + s.phase).sin()).sum::<f32>()
    }

    /// Upper bound on `|value − offset|`.
    pub fn max_excursion(&self) -> f32 {
        self.terms.iter().map(|s| s.amp.abs()).sum()
    }

    /// Upper bound on `|d value / dt|`.
    pub fn max_speed(&self) -> f32 {
        self.terms.iter().map(|s| (s.amp * s.freq).abs()).sum()
    }

    fn sample<R: Rng>(rng: &mut R, offset: f32, max_excursion: f32, max_speed: f32, freq: (f32, f32)) -> Self {
        let n = rng.random_range(1..=3usize);
        let terms = (0..n)
            .map(|_| {
                let f = rng.random_range(freq.0..freq.1);
                let cap = (max_excursion / n as f32).min(max_speed / (n as f32 * f));
                Sinusoid { amp: rng.random_range(0.0..=cap.max(0.0)), freq: f, phase: rng.random_range(0.0..TAU) }
            })
            .collect();
        Self { offset, terms }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    /// Head center in pixels.
    pub center_x: Trajectory,
    pub center_y: Trajectory,
    /// Isotropic head scale around 1.
    pub scale: Trajectory,
    /// Gaze direction, each component in `[−1, 1]`.
    pub gaze_x: Trajectory,
    pub gaze_y: Trajectory,
    /// Mouth opening in `[0, 1]`.
    pub mouth: Trajectory,
    /// Phase of the hair-edge wave, radians.
    pub hair_phase: Trajectory,
}

/// Scrolling plaid background. `velocity` is the backward displacement per
/// frame: background pixel `p` of frame `t` shows what frame `t − 1` showed
/// at `p + velocity`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundParams {
    pub pattern: u8,
    pub velocity: (f32, f32),
}

/// Procedural description of one talking-sprite video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub size: usize,
    pub num_frames: usize,
    pub fps: f32,
    pub identity: IdentityParams,
    pub motion: MotionParams,
    pub background: BackgroundParams,
    pub seed: u64,
}

pub const NUM_BACKGROUND_PATTERNS: u8 = 4;

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_SIZES.contains(&self.size) {
            return Err(Error::config(format!("scene size {} not in {SUPPORTED_SIZES:?}", self.size)));
        }
        if self.num_frames == 0 {
            return Err(Error::config("scene needs at least one frame"));
        }
        let id = &self.identity;
        let in_range = |v: f32, lo: f32, hi: f32| (lo..=hi).contains(&v);
        if !(in_range(id.face_hue, 0.0, 1.0)
            && in_range(id.hair_hue, 0.0, 1.0)
            && in_range(id.face_size, 0.3, 0.5)
            && in_range(id.eye_spacing, 0.2, 0.4)
            && in_range(id.hair_length, 0.1, 0.3))
        {
            return Err(Error::Domain(format!("identity parameters out of range: {id:?}")));
        }
        let m = &self.motion;
        let all = [&m.center_x, &m.center_y, &m.scale, &m.gaze_x, &m.gaze_y, &m.mouth, &m.hair_phase];
        if all.iter().any(|t| t.terms.len() > 3) {
            return Err(Error::Domain("trajectories may have at most three terms".into()));
        }
        let size = self.size as f32;
        let radius = id.face_size * size / 2.0 * MAX_HEAD_SCALE;
        for (axis, traj) in [("x", &m.center_x), ("y", &m.center_y)] {
            let lo = traj.offset - traj.max_excursion();
            let hi = traj.offset + traj.max_excursion();
            if lo < radius || hi > size - radius {
                return Err(Error::Domain(format!(
                    "head center {axis} range [{lo}, {hi}] leaves the {radius}px border margin"
                )));
            }
        }
        if m.scale.offset + m.scale.max_excursion() > MAX_HEAD_SCALE || m.scale.offset - m.scale.max_excursion() <= 0.5
        {
            return Err(Error::Domain("head scale trajectory out of range".into()));
        }
        for g in [&m.gaze_x, &m.gaze_y] {
            if g.offset.abs() + g.max_excursion() > 1.0 {
                return Err(Error::Domain("gaze trajectory leaves [-1, 1]".into()));
            }
        }
        if m.mouth.offset - m.mouth.max_excursion() < 0.0 || m.mouth.offset + m.mouth.max_excursion() > 1.0 {
            return Err(Error::Domain("mouth trajectory leaves [0, 1]".into()));
        }
        let (vx, vy) = self.background.velocity;
        if (vx * vx + vy * vy).sqrt() > MAX_BG_SPEED {
            return Err(Error::Domain("background speed exceeds 2 px/frame".into()));
        }
        if self.background.pattern >= NUM_BACKGROUND_PATTERNS {
            return Err(Error::Domain(format!("unknown background pattern {}", self.background.pattern)));
        }
        Ok(())
    }
}

/// Draws a scene from `seed`. The same arguments always yield the same scene.
pub fn sample_scene(seed: u64, duration_frames: usize, size: usize) -> Result<SceneParams> {
    if !SUPPORTED_SIZES.contains(&size) {
        return Err(Error::config(format!("scene size {size} not in {SUPPORTED_SIZES:?}")));
    }
    if duration_frames == 0 {
        return Err(Error::config("duration_frames must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity = IdentityParams {
        face_hue: rng.random_range(0.0..1.0),
        face_size: rng.random_range(0.3..=0.5),
        eye_spacing: rng.random_range(0.2..=0.4),
        hair_hue: rng.random_range(0.0..1.0),
        hair_length: rng.random_range(0.1..=0.3),
    };
    let s = size as f32;
    let radius = identity.face_size * s / 2.0 * MAX_HEAD_SCALE;
    let room = s / 2.0 - radius - 1.0;
    let center = |rng: &mut ChaCha8Rng| {
        let shift = rng.random_range(-0.25..=0.25) * room;
        Trajectory::sample(rng, s / 2.0 + shift, room - shift.abs(), 1.0, (0.03, 0.25))
    };
    let center_x = center(&mut rng);
    let center_y = center(&mut rng);
    let scale = {
        let f = rng.random_range(0.05..0.2);
        Trajectory {
            offset: 1.0,
            terms: vec![Sinusoid {
                amp: rng.random_range(0.0..=MAX_HEAD_SCALE - 1.0),
                freq: f,
                phase: rng.random_range(0.0..TAU),
            }],
        }
    };
    let gaze = |rng: &mut ChaCha8Rng| {
        let offset = rng.random_range(-0.3..=0.3);
        Trajectory::sample(rng, offset, 1.0 - f32::abs(offset), 0.5, (0.1, 0.5))
    };
    let gaze_x = gaze(&mut rng);
    let gaze_y = gaze(&mut rng);
    let mouth = Trajectory::sample(&mut rng, 0.45, 0.45, 0.4, (0.2, 0.8));
    let hair_offset = rng.random_range(0.0..TAU);
    let hair_phase = Trajectory::sample(&mut rng, hair_offset, 1.5, 0.5, (0.05, 0.3));
    let speed = rng.random_range(0.0..=1.5f32);
    let angle = rng.random_range(0.0..TAU);
    let background = BackgroundParams {
        pattern: rng.random_range(0..NUM_BACKGROUND_PATTERNS),
        velocity: (speed * angle.cos(), speed * angle.sin()),
    };
    let scene = SceneParams {
        size,
        num_frames: duration_frames,
        fps: DEFAULT_FPS,
        identity,
        motion: MotionParams { center_x, center_y, scale, gaze_x, gaze_y, mouth, hair_phase },
        background,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_scene(7, 16, 64).unwrap(), sample_scene(7, 16, 64).unwrap());
    }

    #[test]
    fn neighbouring_seeds_give_distinct_identities() {
        let distinct = (0..100u64)
            .filter(|&s| {
                let a = sample_scene(s, 4, 64).unwrap().identity.descriptor();
                let b = sample_scene(s + 1, 4, 64).unwrap().identity.descriptor();
                a.iter().zip(&b).any(|(x, y)| x != y)
            })
            .count();
        assert!(distinct >= 99, "{distinct}/100");
    }

    #[test]
    fn invalid_size_and_length_are_config_errors() {
        assert!(matches!(sample_scene(0, 4, 48), Err(Error::Config(_))));
        assert!(matches!(sample_scene(0, 0, 64), Err(Error::Config(_))));
    }

    #[test]
    fn sampled_scenes_satisfy_invariants() {
        for seed in 0..200 {
            for &size in &SUPPORTED_SIZES {
                sample_scene(seed, 8, size).unwrap().validate().unwrap();
            }
        }
    }
}
