//! Retrieval-augmented dexterous grasp synthesis.
//!
//! Given a 3D object with part segmentation and a natural-language task
//! instruction, this crate produces a physically plausible, task-aligned
//! hand pose in three stages: grasping-prior retrieval, generative
//! extrinsics initialization, and two-stage prior-guided gradient
//! refinement. It also ships the full evaluation protocol (penetration
//! depth, intersection volume, simulation displacement, part accuracy).
//!
//! With the default `parallel` feature the batch-level loops (dataset
//! generation, batch evaluation, gradient accumulation) run on rayon;
//! without it everything falls back to sequential iteration with
//! identical results.

pub mod autodiff;
pub mod dataset;
pub mod eval;
pub mod exec;
pub mod frontend;
pub mod generator;
pub mod geom;
pub mod hand;
pub mod prior;
pub mod refine;
