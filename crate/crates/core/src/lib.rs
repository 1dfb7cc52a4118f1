#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod gain_margin;
pub mod lifting;
pub mod par;
pub mod problems;
pub mod rates;
pub mod runtime;
mod sim;
pub mod synthesis;
pub mod transfer;

pub use sim::SimError;
