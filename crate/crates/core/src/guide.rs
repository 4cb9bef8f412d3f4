//! The chapters of the guide under `book/src`, one module each, so that
//! `cargo test --doc` runs their snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/exact-forms.md")]
mod exact_forms {}

#[doc = include_str!("../../../book/src/cavity.md")]
mod cavity {}

#[doc = include_str!("../../../book/src/phase-diagram.md")]
mod phase_diagram {}

#[doc = include_str!("../../../book/src/finite-graphs.md")]
mod finite_graphs {}

#[doc = include_str!("../../../book/src/spectral-statistics.md")]
mod spectral_statistics {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
mod reproducibility {}
