//! Sliding Bloom filter: approximate membership over the last `n` elements of
//! a stream.
//!
//! A query for an element among the last `n` arrivals always answers yes. An
//! element that has not appeared among the last `n + m` arrivals is reported
//! with probability at most `ε`. Elements in between (the slack) may go
//! either way. Every operation touches a constant number of cells.
//!
//! ```
//! use slbf::{FilterParams, Slack, SlidingFilter};
//!
//! let params = FilterParams::derive(1000, Slack::Finite(1000), 1.0 / 1024.0, 1 << 64)?;
//! let mut filter = SlidingFilter::new(params, 7);
//! filter.insert(17)?;
//! assert!(filter.query(17));
//! # Ok::<(), slbf::Error>(())
//! ```

pub mod dictionary;
pub mod error;
pub mod filter;
pub mod harness;
pub mod hashing;
pub mod oracle;
pub mod params;
mod snapshot;

pub use dictionary::{DictCell, Dictionary};
pub use error::{Error, Result};
pub use filter::{CostReport, Mode, SlidingFilter, SpaceReport};
pub use hashing::UniversalHash;
pub use oracle::{Classification, WindowOracle};
pub use params::{lower_bound_bits, upper_bound_bits, FilterParams, Slack};
