//! Electromagnetic formation flight (EMFF) of satellite swarms that carry no
//! reaction wheels.
//!
//! Every satellite is actuated only by the forces and torques between its
//! magnetic coils and those of its neighbours. Such wrenches cannot change the
//! total angular momentum of the swarm, which turns the system into a
//! nonholonomic mechanical system. This crate provides
//!
//! - [`magnetics`]: far-field dipole wrenches, AC modulation, averaging and
//!   the inverse wrench-to-dipole allocation,
//! - [`kinematics`]: modified Rodrigues parameters and the stacked rate map,
//! - [`constraint`]: the momentum constraint, its null-space basis and the
//!   momentum map,
//! - [`dynamics`]: full and reduced (quasi-velocity) equations of motion and
//!   an RK4 integrator,
//! - [`controller`]: the time-varying oscillatory feedback law,
//! - [`controllability`]: numeric Lie-bracket rank and good/bad bracket checks,
//! - [`scenario`] and [`sim`]: scenario files, closed-loop runs and output.

pub mod config;
pub mod constraint;
pub mod controllability;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod linalg;
pub mod magnetics;
pub mod parallel;
pub mod scenario;
pub mod sim;

pub use config::{CoilParams, Satellite, SwarmConfig};
pub use error::{EmffError, Result};
pub use kinematics::{Mrp, SwarmState};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type DVec = nalgebra::DVector<f64>;
pub type DMat = nalgebra::DMatrix<f64>;
