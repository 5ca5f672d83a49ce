//! The guide's chapters, compiled as doc-tests so the book's examples stay
//! in step with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/ocv.md")]
pub mod ocv {}
#[doc = include_str!("../../../book/src/cell_model.md")]
pub mod cell_model {}
#[doc = include_str!("../../../book/src/errors.md")]
pub mod errors {}
#[doc = include_str!("../../../book/src/estimator.md")]
pub mod estimator {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/identification.md")]
pub mod identification {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
