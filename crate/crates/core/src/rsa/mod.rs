//! Representation similarity analysis.
//!
//! Each task-specific network is probed with the same set of `P` inputs. For
//! every shareable module the probe activations form a [`FeatureDump`], which
//! is reduced to a `P×P` duality-diagram dissimilarity matrix ([`DdsMatrix`],
//! entries `1 − Pearson`). Comparing the DDS matrices of two tasks with
//! linear CKA yields one entry of that module's task dissimilarity matrix;
//! the per-module matrices are collected in an [`RdmStack`].

mod cka;
mod dds;
mod rdm;

pub use cka::{linear_cka, linear_cka_with, CkaOptions, CKA_DEGENERACY_TOL};
pub use dds::{compute_dds, pearson_dissimilarity, DdsMatrix, FeatureDump};
pub use rdm::{compute_rdm_stack, compute_rdm_stack_with, RdmStack};
