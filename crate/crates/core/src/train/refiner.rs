use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::{check_finite, TrainConfig, TrainLog};
use crate::autograd::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::flowwarp::{FlowProvider, ParseProvider};
use crate::frame::{Frame, VideoSequence};
use crate::infer::{window_indices, RefinedSlot};
use crate::losses::{refiner_objective, temporal_loss_graph, warp_loss_graph, RefinerTerms, WarpOperand};
use crate::nets::{tagged_rng, Checkpoint, Network, Refiner, Translator};
use crate::synthdata::SceneTruth;

/// A training video with optional ground truth for the truth providers.
#[derive(Clone, Debug)]
pub struct TrainingVideo {
    pub video: VideoSequence,
    pub truth: Option<SceneTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerReport {
    pub steps: usize,
    /// Mean objective over the first and the last (up to) 200 steps.
    pub start_loss: f32,
    pub end_loss: f32,
}

/// Per-frame tensors of one video, computed once.
struct Prepared {
    sources: Vec<Tensor>,
    intermediates: Vec<Tensor>,
    /// Backward flow into frame `t − 1`; index 0 is unused.
    flows: Vec<Tensor>,
    masks: Vec<Tensor>,
}

const CHUNK: usize = 16;

fn prepare(
    v: &TrainingVideo,
    translator: &Translator,
    flow: &dyn FlowProvider,
    parse: &dyn ParseProvider,
) -> Result<Prepared> {
    let frames = v.video.frames();
    let mut intermediates = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(CHUNK) {
        let refs: Vec<&Frame> = chunk.iter().collect();
        intermediates.extend(translator.translate_batch(&refs)?.iter().map(Frame::to_tensor));
    }
    let truth = v.truth.as_ref();
    let mut flows = vec![Tensor::zeros([1, 2, frames[0].height(), frames[0].width()])];
    for t in 1..frames.len() {
        let gt = truth.and_then(|s| s.flow_gt.get(t));
        flows.push(flow.flow(&frames[t - 1], &frames[t], gt)?.to_tensor());
    }
    let masks = frames
        .iter()
        .enumerate()
        .map(|(t, f)| Ok(parse.parse(f, truth.and_then(|s| s.mask_bg.get(t)))?.to_tensor3()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { sources: frames.iter().map(Frame::to_tensor).collect(), intermediates, flows, masks })
}

/// Stacks frame `s + offset` of each `(video, s)` item along the batch axis.
fn gather(data: &[Prepared], items: &[(usize, usize)], offset: usize, field: fn(&Prepared) -> &Vec<Tensor>) -> Tensor {
    let parts: Vec<Tensor> = items.iter().map(|&(v, s)| field(&data[v])[s + offset].clone()).collect();
    Tensor::stack_batch(&parts)
}

fn sources(p: &Prepared) -> &Vec<Tensor> {
    &p.sources
}
fn intermediates(p: &Prepared) -> &Vec<Tensor> {
    &p.intermediates
}
fn flows(p: &Prepared) -> &Vec<Tensor> {
    &p.flows
}
fn masks(p: &Prepared) -> &Vec<Tensor> {
    &p.masks
}

/// Trains the sequential refiner against a frozen translator by rolling it
/// over windows of `W` frames on its own outputs and accumulating
/// `λ_warp L_warp + λ_temp L_temp` over the rollout. The checkpoint holds
/// `refiner`.
pub fn train_refiner(
    videos: &[TrainingVideo],
    translator: &Translator,
    flow: &dyn FlowProvider,
    parse: &dyn ParseProvider,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<(Checkpoint, RefinerReport)> {
    cfg.validate()?;
    if !translator.is_frozen() {
        return Err(Error::ContractViolation("the translator must be frozen before refiner training".into()));
    }
    if translator.config().image_size != cfg.net.image_size {
        return Err(Error::Compatibility("translator and refiner image sizes differ".into()));
    }
    let (l, w) = (cfg.net.refiner_window, cfg.rollout);
    if videos.is_empty() {
        return Err(Error::Data("refiner training needs at least one video".into()));
    }
    for v in videos {
        if v.video.num_frames() < w + l {
            return Err(Error::Data(format!(
                "refiner training videos need at least W+L={} frames, got {}",
                w + l,
                v.video.num_frames()
            )));
        }
    }
    let before = translator.store().tensors().to_vec();
    let data = videos.iter().map(|v| prepare(v, translator, flow, parse)).collect::<Result<Vec<_>>>()?;

    let mut refiner = Refiner::new(&cfg.net)?;
    let fx = cfg.feature_extractor()?;
    let mut opt = Adam::new(refiner.store(), cfg.lr);
    let mut rng = tagged_rng(cfg.seed, "refiner_train");
    let weights = &cfg.weights;
    let mut totals = Vec::with_capacity(cfg.refiner_steps);

    for step in 0..cfg.refiner_steps {
        let items: Vec<(usize, usize)> = (0..cfg.refiner_batch)
            .map(|_| {
                let v = rng.random_range(0..data.len());
                (v, rng.random_range(0..=data[v].sources.len() - w))
            })
            .collect();
        let mut g = Graph::new();
        let pr = refiner.store().bind(&mut g, true);
        let pf = fx.bind(&mut g);
        let first_inter = g.constant(gather(&data, &items, 0, intermediates));
        let mut outs: Vec<NodeId> = Vec::with_capacity(w);
        let (mut warp_sum, mut temp_sum): (Option<NodeId>, Option<NodeId>) = (None, None);
        let (mut warp_val, mut temp_val) = (0.0f32, 0.0f32);
        for k in 0..w {
            let (src_idx, ref_slots) = window_indices(k, l);
            let mut parts: Vec<NodeId> =
                src_idx.iter().map(|&i| g.constant(gather(&data, &items, i, sources))).collect();
            parts.extend(ref_slots.iter().map(|s| match s {
                RefinedSlot::Output(i) => outs[*i],
                RefinedSlot::FirstIntermediate => first_inter,
            }));
            let inter = if k == 0 { first_inter } else { g.constant(gather(&data, &items, k, intermediates)) };
            parts.push(inter);
            let stack = g.concat(&parts);
            let y = refiner.forward_graph(&mut g, &pr, stack, inter);
            if k >= 1 {
                let prev_y = outs[k - 1];
                if weights.lambda_warp > 0.0 {
                    let prev = match cfg.warp_operand {
                        WarpOperand::SourcePrev => g.constant(gather(&data, &items, k - 1, sources)),
                        WarpOperand::RefinedPrev => {
                            let v = g.value(prev_y).clone();
                            g.constant(v)
                        }
                    };
                    let f = g.constant(gather(&data, &items, k, flows));
                    let m = g.constant(gather(&data, &items, k, masks));
                    let lw = warp_loss_graph(&mut g, prev, f, m, inter, y);
                    warp_val += g.value(lw).item();
                    warp_sum = Some(match warp_sum {
                        None => lw,
                        Some(s) => g.add(s, lw),
                    });
                }
                if weights.lambda_temp > 0.0 {
                    let lt = temporal_loss_graph(&mut g, &fx, &pf, prev_y, y, &cfg.temp_levels);
                    temp_val += g.value(lt).item();
                    temp_sum = Some(match temp_sum {
                        None => lt,
                        Some(s) => g.add(s, lt),
                    });
                }
            }
            outs.push(y);
        }
        let steps_in_window = (w - 1) as f32;
        let terms = RefinerTerms { warp: warp_val / steps_in_window, temp: temp_val / steps_in_window };
        let objective = refiner_objective(terms, weights);
        let mut total = None;
        for (sum, lambda) in [(warp_sum, weights.lambda_warp), (temp_sum, weights.lambda_temp)] {
            if let Some(s) = sum {
                let s = g.scale(s, lambda / steps_in_window);
                total = Some(match total {
                    None => s,
                    Some(t) => g.add(t, s),
                });
            }
        }
        let total = total.expect("validated weights leave at least one term");
        let tv = g.value(total).item();
        check_finite(tv, "refiner objective", step)?;
        log.push(step, "refiner.warp", terms.warp);
        log.push(step, "refiner.temp", terms.temp);
        log.push(step, "refiner.total", objective.total);
        totals.push(objective.total);
        let mut grads = g.backward(total);
        opt.step(refiner.store_mut(), &pr, &mut grads)?;
        if step % 100 == 0 {
            log::info!("refiner step {step}: objective {:.5}", objective.total);
        }
    }

    if translator.store().tensors() != before.as_slice() {
        return Err(Error::ContractViolation("translator weights changed during refiner training".into()));
    }
    let span = totals.len().min(200);
    let mean = |s: &[f32]| s.iter().sum::<f32>() / s.len() as f32;
    let report = RefinerReport {
        steps: cfg.refiner_steps,
        start_loss: mean(&totals[..span]),
        end_loss: mean(&totals[totals.len() - span..]),
    };
    let mut ck = Checkpoint::new("refiner", cfg.refiner_steps as u64, cfg.net.clone());
    ck.insert("refiner", refiner.store());
    Ok((ck, report))
}
