use crate::error::{Error, Result};
use crate::flowwarp::backward_warp;
use crate::frame::{FlowField, Mask, VideoSequence};

/// Mean over `t ≥ 1` of the mean absolute difference between
/// `backward_warp(ŷ_{t−1}, f_t)` and `ŷ_t` over the valid pixels of frame
/// `t` (all channels). Frames without valid pixels are skipped; a video with
/// no usable frame scores 0.
pub fn temporal_warp_error(video: &VideoSequence, flows: &[FlowField], valid: &[Mask]) -> Result<f32> {
    let n = video.num_frames();
    if flows.len() != n || valid.len() != n {
        return Err(Error::dim(format!(
            "temporal warp error needs one flow and mask per frame: {n} frames, {} flows, {} masks",
            flows.len(),
            valid.len()
        )));
    }
    let frames = video.frames();
    let (mut sum, mut counted) = (0.0f64, 0usize);
    for t in 1..n {
        let m = &valid[t];
        if m.width != video.width() || m.height != video.height() {
            return Err(Error::dim(format!("valid mask {t} differs in size from the video")));
        }
        let count = m.count();
        if count == 0 {
            continue;
        }
        let warped = backward_warp(&frames[t - 1], &flows[t])?;
        let cur = &frames[t];
        let mut acc = 0.0f64;
        for c in 0..3 {
            for (i, (a, b)) in warped.plane(c).iter().zip(cur.plane(c)).enumerate() {
                if m.data[i] {
                    acc += (a - b).abs() as f64;
                }
            }
        }
        sum += acc / (3 * count) as f64;
        counted += 1;
    }
    Ok(if counted == 0 { 0.0 } else { (sum / counted as f64) as f32 })
}
