//! Segmentation heads with implicit background estimation, a small
//! trainable segmentation network, a seeded image-corruption suite, and the
//! evaluation and representation diagnostics used to compare the heads.

pub mod analysis;
pub mod checkpoint;
pub mod conv;
pub mod corrupt;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod heads;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod par;
pub mod report;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use heads::{HeadKind, LabelMap, LogitMap};
pub use par::Exec;
pub use tensor::Tensor;
