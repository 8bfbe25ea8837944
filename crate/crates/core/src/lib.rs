//! Numerical verification of biharmonic Lagrangian submanifolds in complex
//! space forms.

pub mod ambient;
pub mod catalog;
pub mod criteria;
pub mod expr;
pub mod family;
pub mod geometry;
pub mod jets;
pub mod lagrangian;
pub mod runner;
