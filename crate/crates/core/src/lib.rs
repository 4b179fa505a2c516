//! Functional scene graphs: open-vocabulary 3D scene graphs whose element
//! nodes carry articulation axes recovered from tracked manipulation
//! demonstrations.

pub mod articulation;
pub mod bench;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod lifting;
pub mod pipeline;
pub mod refine;
pub mod tracking;
pub mod views;
