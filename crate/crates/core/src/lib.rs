//! Depth-constrained knowledge distillation for encrypted inference.
//!
//! A boosted decision-tree teacher ([`ensemble`]) is distilled into a shallow
//! dense network with polynomial activations ([`dtnet`]) using a synthetic
//! transfer set ([`munge`]) and a depth-filtered architecture search
//! ([`distill`]). The resulting network is executed inside a leveled
//! homomorphic-encryption simulator ([`hesim`]) that tracks multiplicative
//! levels exactly. [`softcmp`] holds the soft-comparator baseline and its
//! analytic cost model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod distill;
pub mod dtnet;
pub mod ensemble;
pub mod error;
pub mod hesim;
pub mod munge;
pub mod softcmp;

mod util;

pub use util::accuracy;

pub use data::{Cell, ColumnKind, ColumnRole, ColumnSpec, Dataset, Preprocessor};
pub use distill::{CandidateResult, SearchReport, SearchSpace, ValidationSource};
pub use dtnet::{DTNetArch, DTNetModel, HiddenLayer, PolyActivation, TrainConfig};
pub use ensemble::{AdaBoostModel, DecisionTree, GridSearchSpec, TreeNode};
pub use error::{Error, Result};
pub use hesim::{CipherVec, Evaluator, HEParams, PlainVec};
pub use munge::MungeParams;
pub use softcmp::{CostModelParams, SoftCmpMode, SoftCmpParams};
