//! Backward warping and the training-time flow and parsing providers.

mod hs;
mod parse;
mod provider;
pub mod warp;

pub use hs::estimate_flow_classical;
pub use parse::{parse_background, parse_background_heuristic, DEFAULT_TAU};
pub use provider::{
    ExternalFlow, ExternalParse, FlowProvider, HeuristicParse, HornSchunck, ParseProvider, TruthFlow, TruthParse,
};
pub use warp::backward_warp;
