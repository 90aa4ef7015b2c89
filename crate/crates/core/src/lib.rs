//! Finite-group Sunada machinery, geodesic flows on model manifolds, flat-trace
//! weights of the geodesic flow and numerical stationary phase.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod defaults;
pub mod group;
pub mod cover;
pub mod geoflow;
pub mod trace;
pub mod microlocal;
