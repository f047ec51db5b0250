//! The user guide, one module per book chapter.
//!
//! Each module's documentation *is* the corresponding chapter under
//! `book/src/`, pulled in with `include_str!`. That keeps the rendered
//! book and the API docs from drifting apart, and — more importantly —
//! makes every code snippet in the book a doc-test: `cargo test --doc`
//! compiles and runs them all.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/pulses-units-grids.md")]
pub mod pulses_units_grids {}

#[doc = include_str!("../../../book/src/baths.md")]
pub mod baths {}

#[doc = include_str!("../../../book/src/tdm.md")]
pub mod tdm {}

#[doc = include_str!("../../../book/src/fisher.md")]
pub mod fisher {}

#[doc = include_str!("../../../book/src/spectra.md")]
pub mod spectra {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/caching.md")]
pub mod caching {}
