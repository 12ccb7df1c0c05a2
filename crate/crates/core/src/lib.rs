//! Per-sample modality importance and textual-bias removal for multimodal
//! intent-classification datasets.

pub mod ablation;
pub mod cli;
pub mod dataset;
pub mod debias;
pub mod error;
pub mod eval;
pub mod learner;
pub mod pipeline;
mod rng;
pub mod router;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/masking.md")]
    mod masking {}
    #[doc = include_str!("../../../book/src/annotation.md")]
    mod annotation {}
    #[doc = include_str!("../../../book/src/debiasing.md")]
    mod debiasing {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/routing.md")]
    mod routing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
