use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use vidstyle_core::frame::Frame;
use vidstyle_core::synthdata::{read_frames_dir, scene_dirs};

/// A single frame directory (name `None`) or the scenes of a dataset root.
pub fn video_dirs(root: &Path) -> Result<Vec<(Option<String>, PathBuf)>> {
    if root.join("manifest.json").is_file() {
        return Ok(vec![(None, root.to_path_buf())]);
    }
    let dirs = scene_dirs(root)?;
    Ok(dirs.into_iter().map(|d| (d.file_name().map(|n| n.to_string_lossy().into_owned()), d)).collect())
}

/// Every frame under `root`, scenes in name order.
pub fn collect_frames(root: &Path) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    for (_, dir) in video_dirs(root)? {
        let video = read_frames_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
        frames.extend(video.into_frames());
    }
    Ok(frames)
}
