//! Max-min fair precoding for rate-splitting multiple access over multi-LED
//! visible-light downlinks with simultaneous lightwave information and power
//! transfer.

pub mod bench;
pub mod channel;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod rates;
pub mod scenario;
pub mod schemes;
pub mod signal;
pub mod solver;
pub mod subproblem;

pub use error::{Error, Result};
