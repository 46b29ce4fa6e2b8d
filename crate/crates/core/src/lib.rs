//! Derivative-free training with ensemble Kalman inversion.

pub mod data;
pub mod eki;
pub mod graph;
pub mod harness;
pub mod losses;
pub mod models;
pub mod numerics;
pub mod prior;
