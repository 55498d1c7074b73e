//! Open-quantum-system dynamics with the hierarchical equations of motion
//! (HEOM), turned into one-ancilla quantum circuits.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`bath`] and [`models`] describe the system, its Debye baths, and the
//!    exponential expansion of the bath correlation function.
//! 2. [`heom`] assembles the twin-space effective Liouvillian and integrates
//!    it. [`propagator`] projects it onto a small subspace of density-matrix
//!    elements, which gives a non-unitary propagator `G(t)`.
//! 3. [`dilation`] writes `G(t)` as a two-term linear combination of
//!    unitaries. [`walsh`] synthesizes the diagonal block with CNOT/RZ
//!    gates, and [`qsim`] runs the resulting circuits, optionally with
//!    seeded shot sampling.
//! 4. [`lindblad`] gives the Markovian reference dynamics, and [`harness`]
//!    ties everything together behind a flat key-value configuration.
//!
//! Internal units: `hbar = 1`, energies in cm⁻¹, times in fs. See [`units`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod circuit;
pub mod dilation;
pub mod error;
pub mod harness;
pub mod heom;
pub mod linalg;
pub mod lindblad;
pub mod models;
pub mod propagator;
pub mod qsim;
pub mod sparse;
pub mod units;
pub mod walsh;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub use bath::{BathDecomposition, BathMode, SpectralDensity};
pub use circuit::{Circuit, Gate};
pub use dilation::SvdLcu;
pub use harness::{ExperimentConfig, Method, RateFit, Trajectory};
pub use heom::{EffectiveLiouvillian, HeomSpace, HeomState, Truncation};
pub use lindblad::LindbladGenerator;
pub use models::{SystemModel, TriadParams};
pub use propagator::{PropagatorSeries, Subspace};
pub use qsim::{RegisterState, ShotCounts};
