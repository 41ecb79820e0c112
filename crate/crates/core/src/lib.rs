//! graphdistill-core: distills a message-passing teacher into a
//! structure-aware, noise-robust MLP student.
//!
//! The numeric core ([`matrix`], [`tape`], [`loss`]) is generic over the
//! scalar type through [`scalar::Scalar`]; the pipeline runs in `f64` (see
//! the aliases below).

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod noise;
pub mod optim;
pub mod positions;
pub mod rng;
pub mod sbm;
pub mod scalar;
pub mod skipgram;
pub mod split;
pub mod student;
pub mod tape;
pub mod teacher;
pub mod walks;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete `f64` instantiations used by the pipeline and the CLI.
pub type Matrix64 = matrix::Matrix<f64>;
pub type Tape64 = tape::Tape<f64>;
pub type Graph64 = graph::Graph<f64>;
pub type PositionTable64 = positions::PositionTable<f64>;
pub type TeacherModel64 = teacher::TeacherModel<f64>;
pub type TeacherOutputs64 = teacher::TeacherOutputs<f64>;
pub type StudentModel64 = student::StudentModel<f64>;

/// Single-precision aliases for callers that trade accuracy for memory.
pub type Matrix32 = matrix::Matrix<f32>;
pub type Graph32 = graph::Graph<f32>;
