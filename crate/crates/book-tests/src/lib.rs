//! Compiles and runs the code blocks of the guide in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/expressions.md")]
pub mod expressions {}

#[doc = include_str!("../../../book/src/systems.md")]
pub mod systems {}

#[doc = include_str!("../../../book/src/learning.md")]
pub mod learning {}

#[doc = include_str!("../../../book/src/lqr.md")]
pub mod lqr {}

#[doc = include_str!("../../../book/src/falsifier.md")]
pub mod falsifier {}

#[doc = include_str!("../../../book/src/cegis.md")]
pub mod cegis {}

#[doc = include_str!("../../../book/src/roa.md")]
pub mod roa {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
