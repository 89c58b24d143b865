//! Knowledge-graph shaped autoencoders for cold-start recommendation.
//!
//! One sparse autoencoder is trained per user: its inputs and outputs are the
//! user's rated items and its hidden units are the knowledge-graph features
//! (categories, ontology classes) of those items. Summed encoder weights give
//! a weighted semantic profile, which is completed from the most similar
//! users and used to rank unrated items.

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod ids;
pub mod io_util;
pub mod kg;
pub mod pipeline;
pub mod profiles;
pub mod recommender;
pub mod seeding;
pub mod synthetic;

pub use error::{Error, Result};
pub use ids::{FeatureId, ItemId, UserId};
