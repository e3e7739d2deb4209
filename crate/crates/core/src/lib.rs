//! Group-sparse sequential azimuth and height estimation for automotive MIMO
//! radar with near-field ground-reflection multipath.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: world frame, antenna layouts and presets, target placement.
//! * [`steering`]: near-field, virtual MIMO and four-path multipath steering.
//! * [`dictionary`]: sensing matrices, group labels, range fusion, normalisation.
//! * [`solver`]: Block OMP, DoA / height maps and threshold declarations.
//! * [`synthesis`]: scenes, trajectories and noisy incoherent snapshots.
//! * [`baselines`]: interference-envelope MUSIC / Burg height estimators.
//! * [`pipeline`]: two-stage estimation, SbyS / GS fusion and trial scoring.
//! * [`harness`]: scenario configs, Monte Carlo sweeps and result emission.

pub mod baselines;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod pipeline;
pub mod solver;
pub mod steering;
pub mod synthesis;

mod linalg;

pub use error::{Error, Result};
pub use nalgebra::DMatrix;
pub use num_complex::Complex64;
