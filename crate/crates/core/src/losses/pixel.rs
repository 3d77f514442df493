//! Pixel-space losses: reconstruction L1 and the composited warp loss.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::flowwarp::backward_warp;
use crate::frame::{FlowField, Frame, ParsingMap};

/// Mean absolute difference over all pixels and channels.
pub fn recon_loss(pred: &Frame, target: &Frame) -> Result<f32> {
    pred.mean_abs_diff(target)
}

pub fn recon_loss_graph(g: &mut Graph, pred: NodeId, target: NodeId) -> NodeId {
    let d = g.sub(pred, target);
    let a = g.abs(d);
    g.mean(a)
}

/// Which previous frame the warp loss warps into its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpOperand {
    /// The previous source frame `x_{t−1}`.
    SourcePrev,
    /// The previous refined output `ŷ_{t−1}`.
    RefinedPrev,
}

impl FromStr for WarpOperand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source_prev" => Ok(Self::SourcePrev),
            "refined_prev" => Ok(Self::RefinedPrev),
            other => Err(Error::config(format!("warp.operand must be source_prev or refined_prev, got {other:?}"))),
        }
    }
}

impl WarpOperand {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SourcePrev => "source_prev",
            Self::RefinedPrev => "refined_prev",
        }
    }
}

/// Composite target `M⊙warp(prev, flow) + (1−M)⊙intermediate`.
pub fn warp_target(prev: &Frame, flow: &FlowField, m: &ParsingMap, intermediate: &Frame) -> Result<Frame> {
    prev.check_same_shape(intermediate, "warp loss")?;
    if m.width() != prev.width() || m.height() != prev.height() {
        return Err(Error::dim("warp loss: parsing map and frames differ in size"));
    }
    let warped = backward_warp(prev, flow)?;
    let (w, h) = (prev.width(), prev.height());
    let mut out = intermediate.clone();
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mv = m.get(x, y);
                out.set(c, x, y, mv * warped.get(c, x, y) + (1.0 - mv) * intermediate.get(c, x, y));
            }
        }
    }
    Ok(out)
}

/// Root-mean-square difference between `y_hat` and the composite target.
pub fn warp_loss(prev: &Frame, flow: &FlowField, m: &ParsingMap, intermediate: &Frame, y_hat: &Frame) -> Result<f32> {
    y_hat.check_same_shape(prev, "warp loss")?;
    let target = warp_target(prev, flow, m, intermediate)?;
    let ss: f64 = target.data().iter().zip(y_hat.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
    Ok((ss / target.data().len() as f64).sqrt() as f32)
}

/// Graph form of [`warp_loss`]. `m3` is the parsing map replicated over
/// three channels; `prev`, `flow`, `m3` and `intermediate` are treated as
/// constants by the caller.
pub fn warp_loss_graph(
    g: &mut Graph,
    prev: NodeId,
    flow: NodeId,
    m3: NodeId,
    intermediate: NodeId,
    y_hat: NodeId,
) -> NodeId {
    let warped = g.warp(prev, flow);
    let delta = g.sub(warped, intermediate);
    let masked = g.mul(m3, delta);
    let target = g.add(intermediate, masked);
    let diff = g.sub(target, y_hat);
    let sq = g.square(diff);
    let ms = g.mean(sq);
    g.sqrt(ms)
}
