//! Chebyshev approximation, auxiliary polynomial states and explicit bounds.

pub mod bounds;
pub mod certify;
pub mod chebyshev;

pub use bounds::*;
pub use chebyshev::*;
