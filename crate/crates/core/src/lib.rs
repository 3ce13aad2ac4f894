pub mod ascent;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod operator;
pub mod problem;
pub mod programs;
pub mod regularity;
pub mod rng;
pub mod space;
pub mod synthesis;
pub mod vector_measure;

pub use error::{Error, Result};
pub use operator::{NormEstimate, OperatorModel};
pub use space::{DualBall, Exponent, MeasureSpace, SpaceDescriptor, WeightVector};
