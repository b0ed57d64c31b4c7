//! Surface diffusion and Willmore flow of normal graphs over reference hypersurfaces.

pub mod certify;
pub mod geometry;
pub mod covariant;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod grid;
pub mod observables;
pub mod par;
pub mod reference;
pub mod small;
pub mod sparse;
pub mod trig;

pub use error::{FlowError, Result};
