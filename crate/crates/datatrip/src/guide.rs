//! The book's chapters, included as documentation so that every code sample
//! in the guide is compiled and run by `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/traffic.md")]
mod traffic {}

#[doc = include_str!("../../../book/src/environment.md")]
mod environment {}

#[doc = include_str!("../../../book/src/planning.md")]
mod planning {}

#[doc = include_str!("../../../book/src/learning.md")]
mod learning {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments {}
