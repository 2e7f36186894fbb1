pub mod align;
pub mod config;
pub mod decoder;
pub mod error;
pub mod eval;
mod intern;
pub mod io;
pub mod lexicon;
pub mod lm;
pub mod morphgen;
pub mod par;
pub mod phrase;
pub mod pipeline;
pub mod textprep;
pub mod tune;

pub use error::{Error, Result};
