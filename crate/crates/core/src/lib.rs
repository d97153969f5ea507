pub mod cli;
pub mod cv;
pub mod data;
pub mod dof;
pub mod error;
pub mod family;
pub mod lasso;
pub mod rgam;
pub mod sim;
pub mod spline;

pub use data::{load_csv, sample_sd, standardize, write_csv, ColumnRef, Dataset, Standardization};
pub use error::{Result, RgamError};
pub use family::{Family, Scale};
