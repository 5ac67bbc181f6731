#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod interface;
pub mod kairos;
pub mod model;
pub mod moca;
pub mod oracle;
pub mod sim;
pub mod spatial;
pub mod verify;

pub use error::{Error, Result};
