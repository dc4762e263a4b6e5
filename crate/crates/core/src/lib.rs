pub mod discrepancy;
pub mod dp;
pub mod env;
pub mod error;
pub mod freepath;
pub mod loopdecomp;
pub mod paths;
pub mod rng;
pub mod shape;
pub mod stats;
