//! The guide's code listings, compiled and run as doc tests. One module per chapter so a
//! failure points at its chapter.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../book/src/inference.md")]
pub mod inference {}

#[doc = include_str!("../../book/src/priors.md")]
pub mod priors {}

#[doc = include_str!("../../book/src/partitioning.md")]
pub mod partitioning {}

#[doc = include_str!("../../book/src/tuning.md")]
pub mod tuning {}

#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}
