//! Library for learning step-sequence structure from text recipes, grounding
//! a video-feature encoder into the same representation space, and predicting
//! future instruction sentences multiple steps ahead.

pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod recipe_net;
pub mod training;

pub use error::{CoreError, Result};
