//! Code listings of the guide in `book/`, compiled and run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/systems.md")]
pub mod systems {}
#[doc = include_str!("../../../book/src/simple.md")]
pub mod simple {}
#[doc = include_str!("../../../book/src/rk.md")]
pub mod rk {}
#[doc = include_str!("../../../book/src/conservation.md")]
pub mod conservation {}
#[doc = include_str!("../../../book/src/dispersion.md")]
pub mod dispersion {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
