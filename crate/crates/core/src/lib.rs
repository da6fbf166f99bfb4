//! Two-agent emergent logographic language simulator.
//!
//! Two agents share a Chinese character embedding table and play a
//! speaker/listener guessing game. Every character they settle on gets an
//! "AI Nüshu" (AIN) vector and a unique three-component pixel glyph.

pub mod cluster;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod game;
pub mod glyph;
pub mod lexicon;
pub mod sim;
pub mod transcript;

pub use error::{Error, Result};
