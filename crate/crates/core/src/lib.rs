pub mod contour;
pub mod cpoly;
pub mod error;
pub mod field;
pub mod grid;
pub mod invariant;
pub mod julia;
pub mod ode;
pub mod operator;
pub mod par;
pub mod trails;

pub use cpoly::{ComplexPoly, Root, RootDivisor, TrailSolution};
pub use error::{Error, Result};
pub use grid::{GridMask, Window};
pub use num_complex::Complex64;
pub use operator::{ClassificationReport, Operator, RegularityClass};
pub use par::Exec;
