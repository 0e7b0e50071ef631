pub mod allocator;
pub mod channel;
pub mod circuit;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod phaseopt;
pub mod txbf;

pub use error::{Error, Result};

pub use nalgebra::Complex;
pub type C64 = Complex<f64>;
pub type CMat = nalgebra::DMatrix<C64>;
pub type CVec = nalgebra::DVector<C64>;
