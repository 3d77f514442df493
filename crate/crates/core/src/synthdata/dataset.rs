//! On-disk dataset layout.
//!
//! ```text
//! <root>/<scene_id>/frames/%06d.png   8-bit RGB
//!                  /flow/%06d.flo2    "SFLO", u32 LE width, u32 LE height, (dx, dy) f32 LE pairs row-major
//!                  /mask/%06d.png     8-bit gray, 255 = background
//!                  /truth.json
//!                  /manifest.json
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::render::{EyeBox, SceneTruth};
use super::scene::SceneParams;
use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame, Mask, ParsingMap, VideoSequence};

const FLO2_MAGIC: &[u8; 4] = b"SFLO";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramesManifest {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub fps: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub fps: f32,
    pub width: usize,
    pub height: usize,
    pub identity_vec: [f32; 5],
    pub gaze_px: Vec<[[f32; 2]; 2]>,
    pub eye_boxes: Vec<[EyeBox; 2]>,
    /// Run-length encoded, alternating runs starting with `false`.
    pub flow_valid: Vec<Vec<u32>>,
    pub scene: Option<SceneParams>,
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn frame_path(dir: &Path, kind: &str, t: usize, ext: &str) -> PathBuf {
    dir.join(kind).join(format!("{t:06}.{ext}"))
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let [r, g, b] = frame.rgb(x as usize, y as usize);
        image::Rgb([to_u8(r), to_u8(g), to_u8(b)])
    });
    img.save(path)?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::load(path, e.to_string()))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut f = Frame::black(w, h);
    for (x, y, p) in img.enumerate_pixels() {
        f.set_rgb(x as usize, y as usize, p.0.map(|v| v as f32 / 255.0));
    }
    Ok(f)
}

fn write_mask_png(path: &Path, map: &ParsingMap) -> Result<()> {
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        image::Luma([to_u8(map.get(x as usize, y as usize))])
    });
    img.save(path)?;
    Ok(())
}

fn read_mask_png(path: &Path) -> Result<ParsingMap> {
    let img = image::open(path).map_err(|e| Error::load(path, e.to_string()))?.to_luma8();
    let data = img.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
    ParsingMap::new(img.width() as usize, img.height() as usize, data)
}

pub fn write_flo2(path: &Path, flow: &FlowField) -> Result<()> {
    let (w, h) = (flow.width(), flow.height());
    let mut buf = Vec::with_capacity(12 + 8 * w * h);
    buf.extend_from_slice(FLO2_MAGIC);
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flow.get(x, y);
            buf.extend_from_slice(&dx.to_le_bytes());
            buf.extend_from_slice(&dy.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_flo2(path: &Path) -> Result<FlowField> {
    let mut buf = Vec::new();
    fs::File::open(path).map_err(|e| Error::load(path, e.to_string()))?.read_to_end(&mut buf)?;
    if buf.len() < 12 || &buf[..4] != FLO2_MAGIC {
        return Err(Error::load(path, "missing SFLO header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    if buf.len() != 12 + 8 * w * h {
        return Err(Error::load(path, format!("{w}x{h} flow needs {} bytes", 12 + 8 * w * h)));
    }
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let o = 12 + 8 * (y * w + x);
            let dx = f32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
            let dy = f32::from_le_bytes(buf[o + 4..o + 8].try_into().unwrap());
            flow.set(x, y, (dx, dy));
        }
    }
    flow.validate()?;
    Ok(flow)
}

/// Writes `frames/%06d.png` and `manifest.json` under `dir`.
pub fn write_frames_dir(dir: &Path, video: &VideoSequence) -> Result<()> {
    fs::create_dir_all(dir.join("frames"))?;
    for (t, f) in video.frames().iter().enumerate() {
        write_png(&frame_path(dir, "frames", t, "png"), f)?;
    }
    let manifest = FramesManifest {
        width: video.width(),
        height: video.height(),
        num_frames: video.num_frames(),
        fps: video.fps(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_frames_dir(dir: &Path) -> Result<VideoSequence> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::load(&manifest_path, e.to_string()))?;
    let manifest: FramesManifest = serde_json::from_str(&text)?;
    let mut frames = Vec::with_capacity(manifest.num_frames);
    for t in 0..manifest.num_frames {
        let f = read_png(&frame_path(dir, "frames", t, "png"))?;
        if f.width() != manifest.width || f.height() != manifest.height {
            return Err(Error::Data(format!("frame {t} in {} disagrees with manifest size", dir.display())));
        }
        frames.push(f);
    }
    VideoSequence::new(frames, manifest.fps)
}

/// Writes one scene directory.
pub fn write_scene(dir: &Path, video: &VideoSequence, truth: &SceneTruth, scene: Option<&SceneParams>) -> Result<()> {
    write_frames_dir(dir, video)?;
    fs::create_dir_all(dir.join("flow"))?;
    fs::create_dir_all(dir.join("mask"))?;
    for t in 0..video.num_frames() {
        write_flo2(&frame_path(dir, "flow", t, "flo2"), &truth.flow_gt[t])?;
        write_mask_png(&frame_path(dir, "mask", t, "png"), &truth.mask_bg[t])?;
    }
    let file = TruthFile {
        fps: video.fps(),
        width: video.width(),
        height: video.height(),
        identity_vec: truth.identity_vec,
        gaze_px: truth.gaze_px.iter().map(|g| g.map(|(x, y)| [x, y])).collect(),
        eye_boxes: truth.eye_boxes.clone(),
        flow_valid: truth.flow_valid.iter().map(Mask::to_rle).collect(),
        scene: scene.cloned(),
    };
    fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Reads a scene directory written by [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<(VideoSequence, SceneTruth, Option<SceneParams>)> {
    let video = read_frames_dir(dir)?;
    let truth_path = dir.join("truth.json");
    let text = fs::read_to_string(&truth_path).map_err(|e| Error::load(&truth_path, e.to_string()))?;
    let file: TruthFile = serde_json::from_str(&text)?;
    let n = video.num_frames();
    if file.gaze_px.len() != n || file.eye_boxes.len() != n || file.flow_valid.len() != n {
        return Err(Error::Data(format!("{} describes a different number of frames", truth_path.display())));
    }
    let (w, h) = (video.width(), video.height());
    let mut truth = SceneTruth {
        flow_gt: Vec::with_capacity(n),
        flow_valid: Vec::with_capacity(n),
        mask_bg: Vec::with_capacity(n),
        gaze_px: file.gaze_px.iter().map(|g| g.map(|[x, y]| (x, y))).collect(),
        eye_boxes: file.eye_boxes,
        identity_vec: file.identity_vec,
    };
    for (t, runs) in file.flow_valid.iter().enumerate() {
        let flow = read_flo2(&frame_path(dir, "flow", t, "flo2"))?;
        let mask = read_mask_png(&frame_path(dir, "mask", t, "png"))?;
        if flow.width() != w || flow.height() != h || mask.width() != w || mask.height() != h {
            return Err(Error::Data(format!("ground truth for frame {t} has the wrong size")));
        }
        truth.flow_gt.push(flow);
        truth.mask_bg.push(mask);
        truth.flow_valid.push(Mask::from_rle(w, h, runs)?);
    }
    Ok((video, truth, file.scene))
}

/// Scene subdirectories of a dataset root, in name order.
pub fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::load(root, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!("no scene directories under {}", root.display())));
    }
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{render_video, sample_scene};

    #[test]
    fn scene_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let scene = sample_scene(4, 3, 32).unwrap();
        let (video, truth) = render_video(&scene).unwrap();
        let path = dir.path().join("scene_0000");
        write_scene(&path, &video, &truth, Some(&scene)).unwrap();
        let (v2, t2, s2) = read_scene(&path).unwrap();
        assert_eq!(s2.as_ref(), Some(&scene));
        assert_eq!(t2.flow_gt, truth.flow_gt);
        assert_eq!(t2.flow_valid, truth.flow_valid);
        assert_eq!(t2.mask_bg, truth.mask_bg);
        for (a, b) in v2.frames().iter().zip(video.frames()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-6));
        }
        assert_eq!(scene_dirs(dir.path()).unwrap(), vec![path]);
    }

    #[test]
    fn flo2_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.flo2");
        fs::write(&p, b"NOPE\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_flo2(&p), Err(Error::Load { .. })));
    }
}
