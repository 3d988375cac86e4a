//! Pocket-conditioned autoregressive normalizing flows for 3D ligand
//! generation.
//!
//! A graph encoder summarizes the binding pocket plus the atoms placed so
//! far. Two conditional affine flows then sample the next atom's element
//! and its offset from a focal atom. Training maximizes the exact
//! likelihood of reference ligands; evaluation scores validity, RMSD and a
//! contact-count affinity estimate.

pub mod chem;
pub mod config;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod flow;
pub mod generator;
pub mod geometry;
pub mod model;
pub mod params;
pub mod pdb;
pub mod trainer;

pub use chem::{Atom, Bond, BondRules, ElementKind, Molecule, Pocket, Vocabulary};
pub use config::RunConfig;
pub use encoder::{Context, Encoder, EncoderConfig};
pub use error::{Error, Result};
pub use evaluator::{AffinityModel, EvalReport};
pub use flow::FlowStack;
pub use generator::{GenConfig, GenerationState, Generator};
pub use geometry::{RbfBank, RigidTransform, Vec3};
pub use model::{Model, ModelConfig};
pub use params::{Checkpoint, ParamSet};
pub use pdb::ComplexEntry;
pub use trainer::{TrainConfig, TrainOutcome};
