use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autograd::{parallel_enabled, set_parallel};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::infer::Stylizer;
use crate::nets::{param_count, Refiner, Translator};

/// Deploy-stack size limit under the default configuration.
pub const PARAM_BUDGET: usize = 6_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean_s: f64,
    pub p95_s: f64,
    pub fps: f64,
    pub reps: usize,
    pub warmup: usize,
    /// `"sequential"` or `"parallel"`.
    pub mode: String,
    pub refiner: bool,
    pub image_size: usize,
}

/// Per-frame wall-clock latency of translator plus (optional) refiner,
/// streaming `frames` cyclically. Timings exclude all I/O.
pub fn benchmark_latency(
    translator: &Translator,
    refiner: Option<&Refiner>,
    frames: &[Frame],
    warmup: usize,
    reps: usize,
    parallel: bool,
) -> Result<LatencyReport> {
    if reps < 10 {
        return Err(Error::config(format!("latency benchmark needs at least 10 reps, got {reps}")));
    }
    if frames.is_empty() {
        return Err(Error::Data("latency benchmark needs at least one frame".into()));
    }
    let previous = parallel_enabled();
    set_parallel(parallel);
    let run = || -> Result<Vec<f64>> {
        let mut s = Stylizer::new(translator, refiner)?;
        for i in 0..warmup {
            s.push(&frames[i % frames.len()])?;
        }
        let mut times = Vec::with_capacity(reps);
        for i in 0..reps {
            let f = &frames[(warmup + i) % frames.len()];
            let start = Instant::now();
            let y = s.push(f)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(y);
        }
        Ok(times)
    };
    let result = run();
    set_parallel(previous);
    let mut times = result?;
    times.sort_by(f64::total_cmp);
    let mean_s = times.iter().sum::<f64>() / reps as f64;
    let p95_s = times[((0.95 * reps as f64).ceil() as usize).clamp(1, reps) - 1];
    Ok(LatencyReport {
        mean_s,
        p95_s,
        fps: 1.0 / mean_s,
        reps,
        warmup,
        mode: if parallel { "parallel" } else { "sequential" }.into(),
        refiner: refiner.is_some(),
        image_size: translator.config().image_size,
    })
}

/// Trainable parameters of the deployed stack (translator plus refiner);
/// auxiliary and training-only networks are excluded.
pub fn report_params(translator: &Translator, refiner: &Refiner) -> usize {
    let total = param_count(translator) + param_count(refiner);
    log::info!(
        "deploy parameters: translator {} + refiner {} = {total}",
        param_count(translator),
        param_count(refiner)
    );
    total
}
