//! Deep-ensemble anomaly detection with feature-space repulsion and
//! dual-space uncertainty.
//!
//! Learners are dense autoencoders trained one after another. Each new
//! learner reconstructs normal data while its bottleneck features are pushed
//! away, under centered kernel alignment, from those of every earlier
//! learner. At inference the ensemble's disagreement is measured on the
//! per-learner product of the input gradient of the reconstruction error and
//! the absolute residual.
//!
//! | module         | contents                                              |
//! |----------------|-------------------------------------------------------|
//! | [`tensor`]     | dense tensors, reverse-mode differentiation           |
//! | [`optim`]      | parameters and Adam                                   |
//! | [`similarity`] | HSIC, CKA, distance/correlation baselines             |
//! | [`model`]      | autoencoder learners, checkpoints                     |
//! | [`rar`]        | sequential repulsive ensemble training                |
//! | [`dsu`]        | anomaly maps and image scores                         |
//! | [`metrics`]    | AUROC, average precision                              |
//! | [`data`]       | synthetic benchmark, dataset files                    |
//! | [`io`]         | PGM, IDX, CSV, key = value                            |
//! | [`config`]     | run configuration                                     |
//! | [`pipeline`]   | synth / train / eval / ablate / heatmap commands      |

pub mod config;
pub mod data;
pub mod dsu;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rar;
pub mod similarity;
pub mod tensor;

pub use error::{Error, Result};
