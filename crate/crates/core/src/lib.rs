//! Signal-gap ("AI washing") index construction and the household
//! adoption models built on it.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capability;
pub mod corpus_text;
pub mod datagen;
pub mod error;
pub mod glm;
pub mod iv;
pub mod mediation;
pub mod moderation;
pub mod numeric;
pub mod panel;
pub mod par;
pub mod policy;
pub mod table;
pub mod washing_index;

pub use error::{Error, Result};
