pub mod corpus;
pub mod dsp;
pub mod graph;
pub mod eval;
pub mod nsf;
pub mod train;
pub mod wavenet;

mod cond;

pub use cond::{CondConfig, F0_FEATURE_SCALE, MEL_CENTER, MEL_SPREAD};
