//! Evaluation metrics: identity similarity, gaze distance, temporal warp
//! error, latency and parameter counts.

mod gaze;
mod identity;
mod latency;
mod report;
mod temporal;

pub use gaze::{gaze_distance, pupil_offset};
pub use identity::{csim, IdentityDescriptor};
pub use latency::{benchmark_latency, report_params, LatencyReport, PARAM_BUDGET};
pub use report::{score_video, EvalReport, VideoScores};
pub use temporal::temporal_warp_error;
