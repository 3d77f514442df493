//! `vidstyle` command-line driver.

mod args;
mod data;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use rand::Rng;
use vidstyle_core::config::Config;
use vidstyle_core::error::Error as CoreError;
use vidstyle_core::infer::stylize_video;
use vidstyle_core::metrics::{benchmark_latency, report_params, score_video, EvalReport};
use vidstyle_core::nets::{load_network, param_count, tagged_rng, Checkpoint, Refiner, Translator};
use vidstyle_core::synthdata::{
    read_frames_dir, read_scene, render_video, sample_scene, write_frames_dir, write_scene,
};
use vidstyle_core::train::{run_stage1, train_refiner, StyleSource, TrainLog, TrainingVideo};

use args::{Cli, Command, ConfigArgs, Stage};
use data::{collect_frames, video_dirs};

/// A user mistake (bad flag, unreadable config) rather than a runtime
/// failure.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// 1 for validation and configuration errors, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Config(_)
                | CoreError::Dimension(_)
                | CoreError::Arity { .. }
                | CoreError::Domain(_)
                | CoreError::MissingInput(_)
                | CoreError::Compatibility(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { seed, num_scenes, frames, size, out } => gen_data(seed, num_scenes, frames, size, &out),
        Command::Train { stage } => match stage {
            Stage::Stage1 { data, style, cfg, out } => train_stage1(&data, &style, &cfg, &out),
            Stage::Stage2 { data, translator, cfg, out } => train_stage2(&data, &translator, &cfg, &out),
        },
        Command::Stylize { input, translator, refiner, no_refiner, out } => {
            stylize(&input, &translator, if no_refiner { None } else { refiner.as_deref() }, &out)
        }
        Command::Eval { src, out, truth, report } => eval(&src, &out, truth.as_deref(), &report),
        Command::Bench { translator, refiner, no_refiner, size, report, cfg } => {
            bench(&translator, if no_refiner { None } else { refiner.as_deref() }, size, &report, &cfg)
        }
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<Config> {
    let mut cfg = match &args.cfg {
        Some(path) => {
            if !path.is_file() {
                return Err(invalid(format!("config file {} does not exist", path.display())));
            }
            Config::load(path).map_err(|e| invalid(e.to_string()))?
        }
        None => Config::default(),
    };
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| invalid(e.to_string()))?;
    }
    let jobs = cfg.jobs();
    vidstyle_core::autograd::set_parallel(jobs != 1);
    if jobs > 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Ok(cfg)
}

fn prepare_out(out: &Path, cfg: &Config) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    cfg.write_resolved(&out.join("resolved.cfg"))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn gen_data(seed: u64, num_scenes: usize, frames: usize, size: usize, out: &Path) -> Result<()> {
    if num_scenes == 0 {
        return Err(invalid("--num-scenes must be at least 1"));
    }
    let mut rng = tagged_rng(seed, "dataset_scenes");
    for i in 0..num_scenes {
        let scene = sample_scene(rng.random(), frames, size)?;
        let (video, truth) = render_video(&scene)?;
        let dir = out.join(format!("scene_{i:04}"));
        write_scene(&dir, &video, &truth, Some(&scene)).with_context(|| format!("writing {}", dir.display()))?;
    }
    log::info!("wrote {num_scenes} scenes of {frames} frames to {}", out.display());
    Ok(())
}

fn load_translator(dir: &Path) -> Result<Translator> {
    let ck = Checkpoint::load(dir)?;
    Ok(load_network(&ck, "translator", Translator::new)?)
}

fn load_refiner(dir: &Path) -> Result<Refiner> {
    let ck = Checkpoint::load(dir)?;
    Ok(load_network(&ck, "refiner", Refiner::new)?)
}

fn train_stage1(data: &Path, style: &str, args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = resolve_config(args)?;
    let train = cfg.train_config()?;
    let source = collect_frames(data)?;
    let style = match style {
        "oracle" => StyleSource::Oracle,
        dir => StyleSource::Frames(collect_frames(Path::new(dir))?),
    };
    prepare_out(out, &cfg)?;
    let mut log = TrainLog::default();
    let result = run_stage1(&source, &style, &train, &mut log);
    log.write_csv(&out.join("train_log.csv"))?;
    let res = result?;
    res.translator.save(out)?;
    res.source_generator.save(&out.join("source_generator"))?;
    if let Some(gy) = &res.target_generator {
        gy.save(&out.join("target_generator"))?;
    }
    write_json(&out.join("report.json"), &res.report)?;
    log::info!(
        "stage1: held-out L1 {:.4} -> {:.4} (best at step {})",
        res.report.initial_l1(),
        res.report.best_l1,
        res.report.best_step
    );
    Ok(())
}

fn train_stage2(data: &Path, translator: &Path, args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = resolve_config(args)?;
    let train = cfg.train_config()?;
    let flow = cfg.flow_provider()?;
    let parse = cfg.parse_provider()?;
    let mut t = load_translator(translator)?;
    t.freeze();
    let mut videos = Vec::new();
    for (_, dir) in video_dirs(data)? {
        let (video, truth, _) = read_scene(&dir).with_context(|| format!("reading {}", dir.display()))?;
        videos.push(TrainingVideo { video, truth: Some(truth) });
    }
    prepare_out(out, &cfg)?;
    let mut log = TrainLog::default();
    let result = train_refiner(&videos, &t, flow.as_ref(), parse.as_ref(), &train, &mut log);
    log.write_csv(&out.join("train_log.csv"))?;
    let (ck, report) = result?;
    ck.save(out)?;
    write_json(&out.join("report.json"), &report)?;
    log::info!("stage2: objective {:.5} -> {:.5}", report.start_loss, report.end_loss);
    Ok(())
}

fn stylize(input: &Path, translator: &Path, refiner: Option<&Path>, out: &Path) -> Result<()> {
    let t = load_translator(translator)?;
    let r = refiner.map(load_refiner).transpose()?;
    for (name, dir) in video_dirs(input)? {
        let video = read_frames_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
        let styled = stylize_video(&video, &t, r.as_ref())?;
        let dest = name.map_or_else(|| out.to_path_buf(), |n| out.join(n));
        write_frames_dir(&dest, &styled).with_context(|| format!("writing {}", dest.display()))?;
    }
    Ok(())
}

fn eval(src: &Path, out: &Path, truth: Option<&Path>, report: &Path) -> Result<()> {
    let mut scores = Vec::new();
    for (name, dir) in video_dirs(src)? {
        let source = read_frames_dir(&dir)?;
        let out_dir = name.as_ref().map_or_else(|| out.to_path_buf(), |n| out.join(n));
        let styled = read_frames_dir(&out_dir).with_context(|| format!("reading {}", out_dir.display()))?;
        let gt = match truth {
            Some(root) => {
                let tdir: PathBuf = match &name {
                    Some(n) if !root.join("truth.json").is_file() => root.join(n),
                    _ => root.to_path_buf(),
                };
                Some(read_scene(&tdir).with_context(|| format!("reading truth from {}", tdir.display()))?.1)
            }
            None => None,
        };
        scores.push(score_video(&source, &styled, gt.as_ref())?);
    }
    let rep = EvalReport::from_scores(&scores)?;
    write_json(report, &rep)?;
    log::info!("eval: csim {:.4}, warp error {:.5} over {} frames", rep.csim_mean, rep.warp_error, rep.n_frames);
    Ok(())
}

fn bench(translator: &Path, refiner: Option<&Path>, size: usize, report: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let settings = cfg.bench();
    let t = load_translator(translator)?;
    let r = refiner.map(load_refiner).transpose()?;
    if t.config().image_size != size {
        return Err(invalid(format!("--size {size} does not match the translator's {}", t.config().image_size)));
    }
    let (video, _) = render_video(&sample_scene(cfg.seed(), 16, size)?)?;
    let lat = benchmark_latency(&t, r.as_ref(), video.frames(), settings.warmup, settings.reps, settings.parallel)?;
    let params = match &r {
        Some(r) => report_params(&t, r),
        None => param_count(&t),
    };
    let json = serde_json::json!({ "latency": lat, "params": params });
    write_json(report, &json)?;
    log::info!("bench: mean {:.4}s p95 {:.4}s ({} mode), {params} parameters", lat.mean_s, lat.p95_s, lat.mode);
    Ok(())
}
