//! Resilient interval observers for nonlinear discrete-time systems whose
//! actuators and sensors are corrupted by unknown attack signals.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`interval`]: interval vectors and sign splittings of matrices.
//! * [`decomposition`]: JSS decompositions and tight decomposition functions.
//! * [`abstraction`]: parallel affine outer-approximation of a map over a box.
//! * [`transform`]: SVD-based attack decoupling of a plant.
//! * [`synthesis`]: comparison systems and LMI gain synthesis.
//! * [`observer`]: the state and input framer recursion.
//! * [`power`]: the three-area power-system benchmark.

// Negated float comparisons are used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod gainfile;
pub mod interval;
pub mod linalg;
pub mod observer;
pub mod power;
pub mod sdp;
pub mod synthesis;
pub mod transform;
pub mod validate;

pub use abstraction::{affine_outer_approx, box_vertices, sigma_bound, AffineAbstraction};
pub use decomposition::{jss_decompose, DifferentiableMap, HPolicy, JssForm};
pub use error::{Error, Result};
pub use interval::{bound_linear_map, is_metzler, split, IntervalVector, MatrixSplit};
pub use observer::{FramerState, FramerTrajectory, ObserverGains, StepOutput};
pub use synthesis::{
    build_comparison, synthesize_gain, verify_synthesis, Case, ComparisonSystem, SynthesisOptions,
    SynthesisResult,
};
pub use transform::{decompose_attack_matrix, transform_plant, PlantModel, TransformedPlant};
