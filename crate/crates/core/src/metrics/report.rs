use serde::{Deserialize, Serialize};

use super::{csim, gaze_distance, temporal_warp_error};
use crate::error::{Error, Result};
use crate::flowwarp::{estimate_flow_classical, parse_background_heuristic, DEFAULT_TAU};
use crate::frame::{FlowField, Mask, VideoSequence};
use crate::synthdata::SceneTruth;

const HS_ITERS: i64 = 100;
const HS_ALPHA: f32 = 10.0;

/// Per-video metric sums, aggregated by [`EvalReport::from_scores`].
#[derive(Clone, Debug, PartialEq)]
pub struct VideoScores {
    pub csim_sum: f64,
    pub gaze_sum: Option<f64>,
    pub warp_error: f64,
    pub n_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub csim_mean: f64,
    /// `None` without eye boxes.
    pub gaze_px_mean: Option<f64>,
    /// Mean of the per-video temporal warp errors.
    pub warp_error: f64,
    pub n_frames: usize,
}

/// Scores a stylized video against its source. With `truth`, identity uses
/// the ground-truth masks, gaze the ground-truth eye boxes and the warp error
/// the exact flow; without it, heuristic parsing and Horn-Schunck flow on the
/// source stand in and gaze is not measured.
pub fn score_video(src: &VideoSequence, out: &VideoSequence, truth: Option<&SceneTruth>) -> Result<VideoScores> {
    let n = src.num_frames();
    if out.num_frames() != n {
        return Err(Error::dim(format!("source has {n} frames, output {}", out.num_frames())));
    }
    if n == 0 {
        return Err(Error::Data("cannot score an empty video".into()));
    }
    if let Some(t) = truth {
        if t.mask_bg.len() != n || t.flow_gt.len() != n || t.eye_boxes.len() != n {
            return Err(Error::dim("ground truth does not cover every frame"));
        }
    }
    let (w, h) = (src.width(), src.height());
    let mut csim_sum = 0.0f64;
    let mut gaze_sum = truth.map(|_| 0.0f64);
    for (t, (s, o)) in src.frames().iter().zip(out.frames()).enumerate() {
        let mask = match truth {
            Some(tr) => tr.mask_bg[t].clone(),
            None => parse_background_heuristic(s, DEFAULT_TAU)?,
        };
        csim_sum += csim(s, o, &mask)? as f64;
        if let (Some(g), Some(tr)) = (gaze_sum.as_mut(), truth) {
            *g += gaze_distance(s, o, &tr.eye_boxes[t])? as f64;
        }
    }
    let warp_error = match truth {
        Some(tr) => temporal_warp_error(out, &tr.flow_gt, &tr.flow_valid)?,
        None => {
            let mut flows = vec![FlowField::zeros(w, h)];
            let mut valid = vec![Mask::filled(w, h, false)];
            for pair in src.frames().windows(2) {
                flows.push(estimate_flow_classical(&pair[0], &pair[1], HS_ITERS, HS_ALPHA)?);
                valid.push(Mask::filled(w, h, true));
            }
            temporal_warp_error(out, &flows, &valid)?
        }
    } as f64;
    Ok(VideoScores { csim_sum, gaze_sum, warp_error, n_frames: n })
}

impl EvalReport {
    pub fn from_scores(scores: &[VideoScores]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Data("no videos to evaluate".into()));
        }
        let n_frames: usize = scores.iter().map(|s| s.n_frames).sum();
        let gaze_px_mean = scores.iter().map(|s| s.gaze_sum).sum::<Option<f64>>().map(|g| g / n_frames as f64);
        Ok(Self {
            csim_mean: scores.iter().map(|s| s.csim_sum).sum::<f64>() / n_frames as f64,
            gaze_px_mean,
            warp_error: scores.iter().map(|s| s.warp_error).sum::<f64>() / scores.len() as f64,
            n_frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{render_video, sample_scene};

    #[test]
    fn identical_video_scores_perfectly() {
        let (v, t) = render_video(&sample_scene(2, 6, 64).unwrap()).unwrap();
        let s = score_video(&v, &v, Some(&t)).unwrap();
        let r = EvalReport::from_scores(&[s]).unwrap();
        assert_eq!(r.csim_mean, 1.0);
        assert_eq!(r.gaze_px_mean, Some(0.0));
        assert!(r.warp_error < 2.0 / 255.0);
        assert_eq!(r.n_frames, 6);
    }

    #[test]
    fn without_truth_gaze_is_absent() {
        let (v, _) = render_video(&sample_scene(3, 3, 64).unwrap()).unwrap();
        let r = EvalReport::from_scores(&[score_video(&v, &v, None).unwrap()]).unwrap();
        assert_eq!(r.gaze_px_mean, None);
        assert_eq!(r.csim_mean, 1.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (v, _) = render_video(&sample_scene(3, 3, 64).unwrap()).unwrap();
        let short = VideoSequence::new(v.frames()[..2].to_vec(), v.fps()).unwrap();
        assert!(matches!(score_video(&v, &short, None), Err(Error::Dimension(_))));
    }
}
