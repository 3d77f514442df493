//! Procedural "talking sprite" videos with exact ground truth, plus the
//! oracle stylizer that defines the target domain.

mod dataset;
mod render;
mod scene;
mod stylize;

pub use dataset::{
    read_flo2, read_frames_dir, read_png, read_scene, scene_dirs, write_flo2, write_frames_dir, write_png, write_scene,
    FramesManifest, TruthFile,
};
pub(crate) use render::{background_palette, EYE_WHITE, FACE_SV, HAIR_SV, MOUTH, PUPIL};
pub use render::{hsv_to_rgb, region_labels, render_video, rgb_to_hsv, EyeBox, Region, SceneTruth, SpriteGeometry};
pub use scene::*;
pub use stylize::{nearest_palette_color, oracle_stylize, STYLE_PALETTE};
