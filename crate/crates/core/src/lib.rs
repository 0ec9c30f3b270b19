//! Linear Rayleigh-Taylor spectrum for two viscous fluid layers between a
//! rigid bottom and a free top surface.

pub mod band;
pub mod discretize;
pub mod eigen;
pub mod geometry;
pub mod growth;
pub mod modes;
pub mod params;
