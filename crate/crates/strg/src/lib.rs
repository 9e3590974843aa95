//! Online pedestrian trajectory prediction over self-growing spatial
//! graphs. Trajectories, head-pose cues, and static scene context are
//! encoded with grid LSTM cells; social neighborhoods are proposed as
//! stochastic NMF adjacency matrices and the lowest-error proposal is
//! kept; the model trains online, one update per window.

pub mod data;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod model;
pub mod numerics;
pub mod recommender;
pub mod training;

pub use error::{Error, Result};
