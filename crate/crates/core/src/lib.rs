pub mod cgdare;
pub mod cli;
pub mod closedform;
pub mod error;
pub mod grde;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pencil;
pub mod reduction;

pub use error::{Error, Result};
