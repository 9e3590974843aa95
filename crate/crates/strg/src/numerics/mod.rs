//! Numerical substrate: dense arrays, the autodiff tape, NMF, SGD.

pub mod dense;
pub mod gradcheck;
pub mod nmf;
pub mod optim;
pub mod tape;

pub use dense::Dense2D;
pub use gradcheck::{check_gradients, GradCheck};
pub use nmf::{nmf, NmfOptions, NmfResult};
pub use optim::{apply_gradients, LrSchedule};
pub use tape::{Gradients, NodeId, Tape};
