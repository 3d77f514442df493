use super::optim::Adam;
use super::{check_finite, sample_batch, TrainConfig, TrainLog, MIN_SOURCE_FRAMES, MIN_STYLE_FRAMES};
use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::losses::{d_loss_graph, g_loss_graph, r1_estimate_graph};
use crate::nets::{load_network, tagged_rng, Checkpoint, Discriminator, Generator, LatentCode, Network};

fn check_frames(frames: &[Frame], size: usize, min: usize, what: &str) -> Result<()> {
    if frames.len() < min {
        return Err(Error::Data(format!("{what} needs at least {min} frames, got {}", frames.len())));
    }
    if let Some(f) = frames.iter().find(|f| f.width() != size || f.height() != size) {
        return Err(Error::dim(format!("{what} frames must be {size}x{size}, found {}x{}", f.width(), f.height())));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adversarial_loop(
    gen: &mut Generator,
    disc: &mut Discriminator,
    frames: &[Frame],
    steps: usize,
    lr: f32,
    cfg: &TrainConfig,
    log: &mut TrainLog,
    tag: &str,
) -> Result<()> {
    let mut rng = tagged_rng(cfg.seed, tag);
    let mut opt_g = Adam::new(gen.store(), lr);
    let mut opt_d = Adam::new(disc.store(), lr);
    let (n, dim) = (cfg.batch_size, cfg.net.latent_dim);
    let gamma = cfg.weights.r1_gamma;
    for step in 0..steps {
        // Discriminator update on real frames against detached samples.
        let real = sample_batch(frames, n, &mut rng);
        let zs: Vec<LatentCode> = (0..n).map(|_| LatentCode::sample(dim, &mut rng)).collect();
        let zt = gen.latent_tensor(&zs)?;
        let fake = {
            let mut g = Graph::new();
            let p = gen.store().bind(&mut g, false);
            let z = g.constant(zt);
            let out = gen.forward_graph(&mut g, &p, z);
            g.value(out).clone()
        };
        let mut g = Graph::new();
        let pd = disc.store().bind(&mut g, true);
        let rn = g.constant(real.clone());
        let fnode = g.constant(fake);
        let dr = disc.forward_graph(&mut g, &pd, rn);
        let df = disc.forward_graph(&mut g, &pd, fnode);
        let mut d_loss = d_loss_graph(&mut g, dr, df);
        if gamma > 0.0 {
            let d = &*disc;
            let r1 = r1_estimate_graph(&mut g, &real, &mut rng, |g, x| d.forward_graph(g, &pd, x));
            log.push(step, format!("{tag}.r1"), g.value(r1).item());
            let pen = g.scale(r1, gamma / 2.0);
            d_loss = g.add(d_loss, pen);
        }
        let dv = g.value(d_loss).item();
        check_finite(dv, "discriminator loss", step)?;
        log.push(step, format!("{tag}.d_loss"), dv);
        let mut grads = g.backward(d_loss);
        opt_d.step(disc.store_mut(), &pd, &mut grads)?;

        // Generator update through the fixed discriminator.
        let zs: Vec<LatentCode> = (0..n).map(|_| LatentCode::sample(dim, &mut rng)).collect();
        let zt = gen.latent_tensor(&zs)?;
        let mut g = Graph::new();
        let pg = gen.store().bind(&mut g, true);
        let pd = disc.store().bind(&mut g, false);
        let z = g.constant(zt);
        let out = gen.forward_graph(&mut g, &pg, z);
        let logits = disc.forward_graph(&mut g, &pd, out);
        let g_loss = g_loss_graph(&mut g, logits);
        let gv = g.value(g_loss).item();
        check_finite(gv, "generator loss", step)?;
        log.push(step, format!("{tag}.g_loss"), gv);
        let mut grads = g.backward(g_loss);
        opt_g.step(gen.store_mut(), &pg, &mut grads)?;
        if step % 100 == 0 {
            log::debug!("{tag} step {step}: d {dv:.4} g {gv:.4}");
        }
    }
    Ok(())
}

/// Adversarially trains the source-domain generator `G_X` and its
/// discriminator on real source frames. The checkpoint holds `gen` and
/// `disc`.
pub fn train_source_generator(frames: &[Frame], cfg: &TrainConfig, log: &mut TrainLog) -> Result<Checkpoint> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::Data("source dataset is empty".into()));
    }
    check_frames(frames, cfg.net.image_size, MIN_SOURCE_FRAMES, "source generator training")?;
    let mut gen = Generator::new(&cfg.net)?;
    let mut disc = Discriminator::new(&cfg.net)?;
    adversarial_loop(&mut gen, &mut disc, frames, cfg.gx_steps, cfg.lr, cfg, log, "gx")?;
    let mut ck = Checkpoint::new("source_generator", cfg.gx_steps as u64, cfg.net.clone());
    ck.insert("gen", gen.store());
    ck.insert("disc", disc.store());
    Ok(ck)
}

/// Continues adversarial training of a copy of `G_X` on the style set at a
/// tenth of the base learning rate, yielding `G_Y`.
pub fn finetune_target_generator(
    source: &Checkpoint,
    style: &[Frame],
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if source.meta.config != cfg.net {
        return Err(Error::Compatibility(
            "source generator checkpoint was trained with a different network config".into(),
        ));
    }
    check_frames(style, cfg.net.image_size, MIN_STYLE_FRAMES, "target generator fine-tuning")?;
    let mut gen = load_network(source, "gen", Generator::new)?;
    let mut disc = load_network(source, "disc", Discriminator::new)?;
    adversarial_loop(&mut gen, &mut disc, style, cfg.gy_steps, cfg.lr / 10.0, cfg, log, "gy")?;
    let mut ck = Checkpoint::new("target_generator", cfg.gy_steps as u64, cfg.net.clone());
    ck.insert("gen", gen.store());
    ck.insert("disc", disc.store());
    Ok(ck)
}
