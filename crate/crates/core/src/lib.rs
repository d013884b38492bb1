//! Spectral simulation and control toolkit for higher-order KdV equations
//! u_t + (-1)^{j+1} d_x^{2j+1} u + u u_x = f on the circle.
pub mod dynamics;
pub mod error;
pub mod estimates;
pub mod feedback;
pub mod fft;
pub mod io;
pub mod moment;
pub mod pipeline;
pub mod profile;
pub mod quad;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
pub use spectral::FourierField;
