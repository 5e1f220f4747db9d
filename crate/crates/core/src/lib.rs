//! SQL-injection detection: request normalization, token features, a
//! rule-based risk labeler, learned classifiers and a collaborative
//! blocklist network.

pub mod collab;
pub mod dataset;
pub mod error;
pub mod features;
pub mod labeler;
pub mod ml;
pub mod normalize;
pub mod par;

pub use error::{Error, Result};
