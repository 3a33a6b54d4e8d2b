//! Portfolio evaluation against daily return data.

pub mod returns;

pub use returns::{build_returns, ReturnPanel, ReturnsError};
