pub mod engine;
pub mod harness;
pub mod error;
pub mod init;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod quad;

pub use error::{Error, Result};
