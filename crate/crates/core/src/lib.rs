//! Power-domain decomposition of channel state information.
//!
//! A CSI matrix (snapshots x nodes) is split into a predictable part, used as
//! a location fingerprint, and an unpredictable part, used as a shared
//! randomness source for secret-key generation. Three decompositions are
//! provided (PCA, kernel PCA, autoencoders) together with the metrics used
//! to tune them: total variation distance between neighbouring fingerprints,
//! a normalised kernel dependence statistic between neighbouring residuals,
//! and the uplink/downlink bit mismatch probability.

pub mod ae;
pub mod csi;
pub mod dep;
pub mod error;
pub mod fit;
pub mod fp;
pub mod kpca;
pub mod pca;
pub mod pipeline;
pub mod sim;
pub mod skg;
pub mod special;
pub mod sweep;

pub use csi::{ComplexSample, CsiMatrix, Direction, NodeGeometry, RealView};
pub use error::{Error, Result};
