//! Inversive-distance circle packing and Newton optimization of the
//! discrete Ricci energy toward a target curvature.

mod flow;
mod hessian;
mod packing;

pub use flow::{
    optimize, optimize_from, BoundaryTargetMode, RicciTrace, SolverConfig, StageSnapshot,
    StopReason, TargetCurvature,
};
pub use hessian::{
    edge_weights, face_power_center, layout_triangle, power_heights, power_heights_with_metric,
    ricci_hessian, PowerHeights,
};
pub use packing::{
    init_circle_packing, packing_edge_lengths, Background, CirclePackingMetric, ETA_FLOOR,
};
