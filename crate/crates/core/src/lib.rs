#![allow(clippy::needless_range_loop)]

pub mod contact;
pub mod curvature;
pub mod error;
pub mod fields;
pub mod geodesics;
pub mod jacobi;
pub mod quanto;
pub mod report;

pub use error::{CeaError, Result};
