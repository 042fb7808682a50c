//! Explicit association of 3D point clouds, tiled triangle meshes and
//! oriented central-perspective images, with label and feature transfer
//! across the established links.

pub mod geom;
pub mod imgma;
pub mod index;
pub mod io;
pub mod metrics;
pub mod pcimga;
pub mod pcma;
pub mod scene;
pub mod synthkit;
pub mod transfer;
