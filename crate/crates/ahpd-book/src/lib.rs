//! mdBook cannot run the guide's code blocks as tests, but rustdoc can: each
//! chapter is included verbatim as a module's documentation, so `cargo test
//! --doc -p ahpd-book` compiles and runs every Rust fence in the book. A
//! snippet that drifts from the library API fails the build here.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/plant-model.md")]
pub mod plant_model {}

#[doc = include_str!("../../../book/src/properties.md")]
pub mod properties {}

#[doc = include_str!("../../../book/src/steady-state.md")]
pub mod steady_state {}

#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}

#[doc = include_str!("../../../book/src/linearization.md")]
pub mod linearization {}

#[doc = include_str!("../../../book/src/benchmark-variants.md")]
pub mod benchmark_variants {}

#[doc = include_str!("../../../book/src/scenarios-cli.md")]
pub mod scenarios_cli {}
