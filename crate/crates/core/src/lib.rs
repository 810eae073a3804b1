//! Shape classification of triangle meshes with Ricci-flow covariance descriptors.
//!
//! A mesh is flowed to a flat metric by discrete Ricci flow on a circle
//! packing. At each recorded stage, per-vertex features (conformal factor,
//! area distortion, heat kernel signature) over high-curvature vertices are
//! summarized as an SPD covariance matrix. Subjects are compared with a
//! set kernel built on the affine-invariant Riemannian metric and classified
//! by kernel KNN.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod embed;
pub mod error;
pub mod features;
pub mod hks;
pub mod mesh;
pub mod pipeline;
pub mod ricci;
pub mod sparse;
pub mod spd;
pub mod synth;

pub use classify::{ClassificationReport, LabeledDataset, Metrics};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, VertexSelection};
pub use mesh::{CurvatureField, EdgeMetric, TriangleMesh};
pub use pipeline::{DatasetManifest, PipelineConfig};
pub use ricci::{RicciTrace, SolverConfig};
pub use spd::{CovDescriptor, KernelParams, MatchMode, SubjectSignature};
