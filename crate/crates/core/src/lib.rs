//! Multi-view object image search over bag-of-visual-words histograms.
//!
//! Pipeline: [`features`] detects corners and blobs and describes them,
//! [`vocabulary`] quantizes descriptors against per-channel k-means
//! vocabularies into concatenated histograms, [`similarity`] compares
//! histograms, [`fusion`] combines multiple query or database views,
//! [`index`] stores objects and answers queries, and [`eval`] measures
//! ranking quality.

pub mod codec;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod index;
pub mod kmeans;
pub mod manifest;
pub mod par;
pub mod similarity;
pub mod vocabulary;

pub use codec::FormatError;
pub use par::Exec;
