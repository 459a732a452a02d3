//! Numerical optimizers shared by the divergence and separability routines.

pub(crate) mod linalg;
pub(crate) mod sdp;
pub(crate) mod relent;
