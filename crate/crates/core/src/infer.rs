//! Causal streaming stylization: translator, then the sequential refiner over
//! a Markov window of past sources and past refined outputs.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::nets::{Refiner, RefinerInput, Translator};

/// Slot of a refined-history entry in a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinedSlot {
    /// `ŷ_i`.
    Output(usize),
    /// Padding with the translation of the first frame.
    FirstIntermediate,
}

/// Frame indices for the window at `t`: sources `t−L … t` (clamped to 0)
/// and refined outputs `t−L … t−1`, padded with `G(x_0)` before the start.
pub fn window_indices(t: usize, window: usize) -> (Vec<usize>, Vec<RefinedSlot>) {
    let sources = (0..=window).map(|k| (t + k).saturating_sub(window)).collect();
    let refined = (0..window)
        .map(|k| match (t + k).checked_sub(window) {
            Some(i) if i < t => RefinedSlot::Output(i),
            _ => RefinedSlot::FirstIntermediate,
        })
        .collect();
    (sources, refined)
}

/// Ring buffers of the last `L+1` sources and `L` refined outputs.
#[derive(Clone, Debug)]
pub struct StreamState {
    window: usize,
    t: usize,
    first_source: Option<Frame>,
    first_intermediate: Option<Frame>,
    sources: VecDeque<Frame>,
    refined: VecDeque<Frame>,
    awaiting_output: bool,
    peak_frames: usize,
}

impl StreamState {
    pub fn new(window: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::config("refiner window L must be at least 1"));
        }
        Ok(Self {
            window,
            t: 0,
            first_source: None,
            first_intermediate: None,
            sources: VecDeque::with_capacity(window + 1),
            refined: VecDeque::with_capacity(window),
            awaiting_output: false,
            peak_frames: 0,
        })
    }

    /// Index of the next frame to be assembled.
    pub fn frame_index(&self) -> usize {
        self.t
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn source_occupancy(&self) -> usize {
        self.sources.len()
    }

    pub fn refined_occupancy(&self) -> usize {
        self.refined.len()
    }

    /// Frames held right now, including the two padding frames.
    pub fn resident_frames(&self) -> usize {
        self.sources.len()
            + self.refined.len()
            + self.first_source.is_some() as usize
            + self.first_intermediate.is_some() as usize
    }

    /// Largest [`resident_frames`](Self::resident_frames) seen so far.
    pub fn peak_frames(&self) -> usize {
        self.peak_frames
    }

    /// Records the refined output of the frame last assembled.
    pub fn commit(&mut self, refined: Frame) -> Result<()> {
        if !self.awaiting_output {
            return Err(Error::ContractViolation("commit without a pending window".into()));
        }
        if let Some(f) = &self.first_source {
            f.check_same_shape(&refined, "stream state")?;
        }
        if self.refined.len() == self.window {
            self.refined.pop_front();
        }
        self.refined.push_back(refined);
        self.awaiting_output = false;
        self.t += 1;
        self.peak_frames = self.peak_frames.max(self.resident_frames());
        Ok(())
    }
}

/// Pushes `x_t` into the stream and returns the refiner window for `t`.
/// Must be followed by [`StreamState::commit`] with `ŷ_t`.
pub fn assemble_window(
    state: &mut StreamState,
    x_t: &Frame,
    intermediate: &Frame,
    window: usize,
) -> Result<RefinerInput> {
    if window != state.window {
        return Err(Error::config(format!("window L={window} does not match stream state L={}", state.window)));
    }
    if state.awaiting_output {
        return Err(Error::ContractViolation("previous window was never committed".into()));
    }
    x_t.check_same_shape(intermediate, "refiner window")?;
    if let Some(f) = &state.first_source {
        f.check_same_shape(x_t, "refiner window")?;
    }
    if state.t == 0 {
        state.first_source = Some(x_t.clone());
        state.first_intermediate = Some(intermediate.clone());
    }
    if state.sources.len() == window + 1 {
        state.sources.pop_front();
    }
    state.sources.push_back(x_t.clone());
    state.awaiting_output = true;
    state.peak_frames = state.peak_frames.max(state.resident_frames());

    let x0 = state.first_source.as_ref().expect("set at t = 0");
    let g0 = state.first_intermediate.as_ref().expect("set at t = 0");
    let missing = window + 1 - state.sources.len();
    let sources = std::iter::repeat_n(x0, missing).chain(&state.sources).cloned().collect();
    let missing = window - state.refined.len();
    let refined_prev = std::iter::repeat_n(g0, missing).chain(&state.refined).cloned().collect();
    Ok(RefinerInput { sources, refined_prev, intermediate: intermediate.clone() })
}

/// Frame-at-a-time stylizer over frozen networks.
pub struct Stylizer<'a> {
    translator: &'a Translator,
    refiner: Option<&'a Refiner>,
    state: StreamState,
}

impl<'a> Stylizer<'a> {
    /// `refiner = None` yields frame-by-frame intermediates.
    pub fn new(translator: &'a Translator, refiner: Option<&'a Refiner>) -> Result<Self> {
        let window = match refiner {
            Some(r) => {
                if r.config().image_size != translator.config().image_size {
                    return Err(Error::Compatibility(format!(
                        "translator is {}px but refiner is {}px",
                        translator.config().image_size,
                        r.config().image_size
                    )));
                }
                r.window()
            }
            None => 1,
        };
        Ok(Self { translator, refiner, state: StreamState::new(window)? })
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    pub fn push(&mut self, x_t: &Frame) -> Result<Frame> {
        let s = self.translator.config().image_size;
        if x_t.width() != s || x_t.height() != s {
            return Err(Error::Compatibility(format!(
                "frame is {}x{} but the networks expect {s}x{s}",
                x_t.width(),
                x_t.height()
            )));
        }
        let intermediate = self.translator.translate(x_t)?;
        let Some(refiner) = self.refiner else {
            return Ok(intermediate);
        };
        let input = assemble_window(&mut self.state, x_t, &intermediate, refiner.window())?;
        let y = refiner.refine(&input)?;
        self.state.commit(y.clone())?;
        Ok(y)
    }
}

/// Stylizes a whole video causally, in frame order.
pub fn stylize_video(
    video: &VideoSequence,
    translator: &Translator,
    refiner: Option<&Refiner>,
) -> Result<VideoSequence> {
    if video.is_empty() {
        return Err(Error::Data("cannot stylize an empty video".into()));
    }
    let mut s = Stylizer::new(translator, refiner)?;
    let frames = video.frames().iter().map(|f| s.push(f)).collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, video.fps())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{NetConfig, Network};

    fn tagged(i: usize) -> Frame {
        Frame::filled(4, 4, [i as f32 / 100.0, 0.0, 0.0])
    }

    fn tag(f: &Frame) -> usize {
        (f.get(0, 0, 0) * 100.0).round() as usize
    }

    #[test]
    fn window_matches_index_rule_exhaustively() {
        for l in 1..=3 {
            let mut state = StreamState::new(l).unwrap();
            for t in 0..=6usize {
                let x = tagged(t);
                let inter = tagged(50 + t);
                let w = assemble_window(&mut state, &x, &inter, l).unwrap();
                let srcs: Vec<usize> = w.sources.iter().map(tag).collect();
                let expected_src: Vec<usize> =
                    (t as isize - l as isize..=t as isize).map(|i| i.max(0) as usize).collect();
                assert_eq!(srcs, expected_src, "L={l} t={t}");
                // Refined outputs are tagged 20 + i; G(x_0) is tagged 50.
                let refs: Vec<usize> = w.refined_prev.iter().map(tag).collect();
                let expected_ref: Vec<usize> =
                    (t as isize - l as isize..t as isize).map(|i| if i < 0 { 50 } else { 20 + i as usize }).collect();
                assert_eq!(refs, expected_ref, "L={l} t={t}");
                assert_eq!(tag(&w.intermediate), 50 + t);
                let (si, ri) = window_indices(t, l);
                assert_eq!(si, expected_src);
                let ri: Vec<usize> = ri
                    .iter()
                    .map(|s| match s {
                        RefinedSlot::Output(i) => 20 + i,
                        RefinedSlot::FirstIntermediate => 50,
                    })
                    .collect();
                assert_eq!(ri, expected_ref);
                assert_eq!(state.source_occupancy(), (t + 1).min(l + 1));
                assert_eq!(state.refined_occupancy(), t.min(l));
                state.commit(tagged(20 + t)).unwrap();
            }
        }
    }

    #[test]
    fn paper_window_examples() {
        assert_eq!(window_indices(5, 2).0, vec![3, 4, 5]);
        assert_eq!(window_indices(5, 2).1, vec![RefinedSlot::Output(3), RefinedSlot::Output(4)]);
        assert_eq!(window_indices(0, 2).0, vec![0, 0, 0]);
        assert_eq!(window_indices(0, 2).1, vec![RefinedSlot::FirstIntermediate; 2]);
        assert_eq!(window_indices(1, 1), (vec![0, 1], vec![RefinedSlot::Output(0)]));
    }

    #[test]
    fn shape_drift_and_protocol_errors() {
        let mut state = StreamState::new(2).unwrap();
        let f = Frame::black(4, 4);
        assemble_window(&mut state, &f, &f, 2).unwrap();
        assert!(matches!(assemble_window(&mut state, &f, &f, 2), Err(Error::ContractViolation(_))));
        state.commit(f.clone()).unwrap();
        let g = Frame::black(5, 4);
        assert!(matches!(assemble_window(&mut state, &g, &g, 2), Err(Error::Dimension(_))));
        assert!(matches!(StreamState::new(0), Err(Error::Config(_))));
    }

    #[test]
    fn memory_is_bounded_by_the_window() {
        let mut state = StreamState::new(2).unwrap();
        for t in 0..200 {
            let f = tagged(t % 10);
            assemble_window(&mut state, &f, &f, 2).unwrap();
            state.commit(f).unwrap();
        }
        assert!(state.peak_frames() <= 2 * 2 + 1 + 2);
    }

    fn small_nets() -> (Translator, Refiner) {
        let cfg = NetConfig { image_size: 32, base_channels: 4, refiner_channels: 4, seed: 9, ..NetConfig::default() };
        (Translator::new(&cfg).unwrap(), Refiner::new(&cfg).unwrap())
    }

    fn video(n: usize, seed: u64) -> VideoSequence {
        let (v, _) = crate::synthdata::render_video(&crate::synthdata::sample_scene(seed, n, 32).unwrap()).unwrap();
        v
    }

    fn perturb_head(r: &mut Refiner) {
        let names = r.store().names().to_vec();
        for (n, t) in names.iter().zip(r.store_mut().tensors_mut()) {
            if n.starts_with("head") {
                for (k, v) in t.data_mut().iter_mut().enumerate() {
                    *v = 0.01 * ((k % 5) as f32 - 2.0);
                }
            }
        }
    }

    #[test]
    fn zero_head_refiner_is_identity() {
        let (t, r) = small_nets();
        let v = video(6, 1);
        let a = stylize_video(&v, &t, Some(&r)).unwrap();
        let b = stylize_video(&v, &t, None).unwrap();
        assert_eq!(a.frames(), b.frames());
    }

    #[test]
    fn causal_and_prefix_stable() {
        let (t, mut r) = small_nets();
        perturb_head(&mut r);
        let v = video(10, 2);
        let full = stylize_video(&v, &t, Some(&r)).unwrap();
        let prefix = VideoSequence::new(v.frames()[..5].to_vec(), v.fps()).unwrap();
        let part = stylize_video(&prefix, &t, Some(&r)).unwrap();
        assert_eq!(part.frames(), &full.frames()[..5]);
        let mut mutated = v.frames().to_vec();
        mutated[6] = Frame::filled(32, 32, [1.0, 0.0, 1.0]);
        let out = stylize_video(&VideoSequence::new(mutated, v.fps()).unwrap(), &t, Some(&r)).unwrap();
        assert_eq!(&out.frames()[..6], &full.frames()[..6]);
        assert_ne!(out.frames()[6], full.frames()[6]);
    }

    #[test]
    fn identical_frames_give_identical_outputs() {
        let (t, mut r) = small_nets();
        let f = video(1, 3).frames()[0].clone();
        let still = VideoSequence::new(vec![f.clone(); 5], 25.0).unwrap();
        for refiner in [None, Some(&r)] {
            let out = stylize_video(&still, &t, refiner).unwrap();
            assert!(out.frames().windows(2).all(|w| w[0] == w[1]));
        }
        // A nonzero head still maps identical windows to identical outputs.
        perturb_head(&mut r);
        let a = stylize_video(&still, &t, Some(&r)).unwrap();
        let b = stylize_video(&still, &t, Some(&r)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let (t, r) = small_nets();
        let empty = VideoSequence::new(vec![], 25.0).unwrap();
        assert!(matches!(stylize_video(&empty, &t, Some(&r)), Err(Error::Data(_))));
        let big = VideoSequence::new(vec![Frame::black(64, 64)], 25.0).unwrap();
        assert!(matches!(stylize_video(&big, &t, Some(&r)), Err(Error::Compatibility(_))));
        let other = Refiner::new(&NetConfig { image_size: 64, refiner_channels: 4, ..NetConfig::default() }).unwrap();
        assert!(matches!(Stylizer::new(&t, Some(&other)), Err(Error::Compatibility(_))));
    }
}
