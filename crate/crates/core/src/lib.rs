//! Tilings from families of substitution rules, their hierarchies, and the
//! cocycles that control twisted ergodic integrals.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod error;
pub mod geometry;
pub mod intmat;
pub mod substitution;
pub mod symbolic;
pub mod hierarchy;
pub mod returns;
pub mod cyclotomic;
pub mod cocycles;
pub mod deformation;
pub mod twisted;
pub mod cli;
pub mod golden;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    pub mod systems {}
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    pub mod hierarchy {}
    #[doc = include_str!("../../../book/src/cocycles.md")]
    pub mod cocycles {}
    #[doc = include_str!("../../../book/src/twisted.md")]
    pub mod twisted {}
    #[doc = include_str!("../../../book/src/returns.md")]
    pub mod returns {}
    #[doc = include_str!("../../../book/src/deformation.md")]
    pub mod deformation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
