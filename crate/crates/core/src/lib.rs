pub mod autograd;
pub mod config;
pub mod error;
pub mod flowwarp;
pub mod frame;
pub mod infer;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod synthdata;
pub mod train;
