//! Cross-lingual dual-pathway topic modelling.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! pipeline: vocabulary and bag-of-words construction, neighbour-based
//! global bag-of-words augmentation, the local/global variational topic model
//! with its analytic gradients, the minibatch trainer, evaluation metrics and
//! a planted-topic corpus generator. File formats and the command-line driver
//! live in the `gloctm` crate.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod lexicon;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};

/// Which side of the bilingual corpus a piece of data belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Language {
    L1,
    L2,
}

impl Language {
    pub const BOTH: [Language; 2] = [Language::L1, Language::L2];

    pub fn other(self) -> Language {
        match self {
            Language::L1 => Language::L2,
            Language::L2 => Language::L1,
        }
    }

    /// 0 for the first language, 1 for the second.
    pub fn index(self) -> usize {
        match self {
            Language::L1 => 0,
            Language::L2 => 1,
        }
    }

    /// The 1-based id used in file formats.
    pub fn id(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_id(id: u8) -> Option<Language> {
        match id {
            1 => Some(Language::L1),
            2 => Some(Language::L2),
            _ => None,
        }
    }
}

impl core::fmt::Display for Language {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "L{}", self.id())
    }
}
