pub mod baseline;
pub mod cohort;
pub mod error;
pub mod featurize;
pub mod fmt;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/tables.md")]
    struct Tables;
    #[doc = include_str!("../../../book/src/cohort.md")]
    struct Cohort;
    #[doc = include_str!("../../../book/src/features.md")]
    struct Features;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
}
