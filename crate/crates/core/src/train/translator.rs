use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::pairs::ImagePair;
use super::{check_finite, TrainConfig, TrainLog, MIN_PAIRS};
use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::losses::{d_loss_graph, g_loss_graph, perceptual_loss_graph, r1_estimate_graph, recon_loss_graph};
use crate::nets::{tagged_rng, Checkpoint, Discriminator, Network, ParamStore, Translator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslatorReport {
    /// `(step, held-out mean L1)` at every evaluation, starting at step 0.
    pub eval: Vec<(usize, f32)>,
    pub best_step: usize,
    pub best_l1: f32,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
}

impl TranslatorReport {
    pub fn initial_l1(&self) -> f32 {
        self.eval[0].1
    }
}

const EVAL_CHUNK: usize = 16;

/// Held-out mean L1 between the translation of each `x` and its `y`.
pub(crate) fn heldout_l1(t: &Translator, pairs: &[&ImagePair]) -> Result<f32> {
    let mut total = 0.0f64;
    for chunk in pairs.chunks(EVAL_CHUNK) {
        let xs: Vec<&Frame> = chunk.iter().map(|p| &p.x).collect();
        for (out, p) in t.translate_batch(&xs)?.iter().zip(chunk) {
            total += out.mean_abs_diff(&p.y)? as f64;
        }
    }
    Ok((total / pairs.len() as f64) as f32)
}

/// Trains `G_{X→Y}` on `pairs` with `λ_adv L_adv + λ_recon L_recon +
/// λ_perc L_perc`, evaluating on a held-out split every `eval_every` steps
/// and returning the best evaluated weights. The checkpoint holds
/// `translator` and `disc`.
pub fn train_translator(
    pairs: &[ImagePair],
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<(Checkpoint, TranslatorReport)> {
    cfg.validate()?;
    if pairs.len() < MIN_PAIRS {
        return Err(Error::Data(format!("translator training needs at least {MIN_PAIRS} pairs, got {}", pairs.len())));
    }
    let size = cfg.net.image_size;
    for p in pairs {
        p.x.check_same_shape(&p.y, "training pair")?;
        if p.x.width() != size || p.x.height() != size {
            return Err(Error::dim(format!("training pairs must be {size}x{size}")));
        }
    }
    let mut rng = tagged_rng(cfg.seed, "translator_train");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_held = ((pairs.len() as f32 * cfg.heldout_fraction).round() as usize).clamp(1, pairs.len() - 1);
    let (held_idx, train_idx) = order.split_at(n_held);
    let held: Vec<&ImagePair> = held_idx.iter().map(|&i| &pairs[i]).collect();
    let train: Vec<&ImagePair> = train_idx.iter().map(|&i| &pairs[i]).collect();

    let mut net = Translator::new(&cfg.net)?;
    let mut disc = Discriminator::new(&cfg.net)?;
    let fx = cfg.feature_extractor()?;
    let mut opt_t = Adam::new(net.store(), cfg.lr);
    let mut opt_d = Adam::new(disc.store(), cfg.lr);
    let w = &cfg.weights;
    let adversarial = w.lambda_adv > 0.0;

    let initial = heldout_l1(&net, &held)?;
    log.push(0, "translator.eval_l1", initial);
    let mut eval = vec![(0usize, initial)];
    let (mut best_step, mut best_l1, mut best): (usize, f32, ParamStore) = (0, initial, net.store().clone());

    for step in 1..=cfg.translator_steps {
        let batch: Vec<&ImagePair> = (0..cfg.batch_size).map(|_| train[rng.random_range(0..train.len())]).collect();
        let xs = Frame::batch_tensor(&batch.iter().map(|p| &p.x).collect::<Vec<_>>());
        let ys = Frame::batch_tensor(&batch.iter().map(|p| &p.y).collect::<Vec<_>>());

        let mut g = Graph::new();
        let pt = net.store().bind(&mut g, true);
        let xn = g.constant(xs);
        let yn = g.constant(ys.clone());
        let pred = net.forward_graph(&mut g, &pt, xn);
        let recon = recon_loss_graph(&mut g, pred, yn);
        let mut total = g.scale(recon, w.lambda_recon);
        log.push(step, "translator.recon", g.value(recon).item());
        if w.lambda_perc > 0.0 {
            let pf = fx.bind(&mut g);
            let perc = perceptual_loss_graph(&mut g, &fx, &pf, pred, yn, &cfg.perc_levels, cfg.cx_h, cfg.cx_eps);
            log.push(step, "translator.perc", g.value(perc).item());
            let s = g.scale(perc, w.lambda_perc);
            total = g.add(total, s);
        }
        if adversarial {
            let pd = disc.store().bind(&mut g, false);
            let logits = disc.forward_graph(&mut g, &pd, pred);
            let adv = g_loss_graph(&mut g, logits);
            log.push(step, "translator.adv", g.value(adv).item());
            let s = g.scale(adv, w.lambda_adv);
            total = g.add(total, s);
        }
        let tv = g.value(total).item();
        check_finite(tv, "translator loss", step)?;
        log.push(step, "translator.total", tv);
        let fake = g.value(pred).clone();
        let mut grads = g.backward(total);
        opt_t.step(net.store_mut(), &pt, &mut grads)?;

        if adversarial {
            let mut g = Graph::new();
            let pd = disc.store().bind(&mut g, true);
            let rn = g.constant(ys.clone());
            let fnode = g.constant(fake);
            let dr = disc.forward_graph(&mut g, &pd, rn);
            let df = disc.forward_graph(&mut g, &pd, fnode);
            let mut d_loss = d_loss_graph(&mut g, dr, df);
            if w.r1_gamma > 0.0 {
                let d = &disc;
                let r1 = r1_estimate_graph(&mut g, &ys, &mut rng, |g, x| d.forward_graph(g, &pd, x));
                let pen = g.scale(r1, w.r1_gamma / 2.0);
                d_loss = g.add(d_loss, pen);
            }
            let dv = g.value(d_loss).item();
            check_finite(dv, "translator discriminator loss", step)?;
            log.push(step, "translator.d_loss", dv);
            let mut grads = g.backward(d_loss);
            opt_d.step(disc.store_mut(), &pd, &mut grads)?;
        }

        if step % cfg.eval_every == 0 || step == cfg.translator_steps {
            let l1 = heldout_l1(&net, &held)?;
            log.push(step, "translator.eval_l1", l1);
            log::info!("translator step {step}: held-out L1 {l1:.4}");
            eval.push((step, l1));
            if l1 < best_l1 {
                (best_step, best_l1, best) = (step, l1, net.store().clone());
            }
        }
    }
    let mut ck = Checkpoint::new("translator", best_step as u64, cfg.net.clone());
    ck.insert("translator", &best);
    ck.insert("disc", disc.store());
    let report = TranslatorReport { eval, best_step, best_l1, train_pairs: train.len(), heldout_pairs: held.len() };
    Ok((ck, report))
}
