pub mod adaptive;
pub mod basis;
pub mod criteria;
pub mod curves;
pub mod error;
pub mod fpca;
pub mod funclust;
pub mod linalg;
pub mod mvclust;
pub mod par;
pub mod pipeline;

pub use error::{FdError, Result};
