//! Generalized supervised contrastive learning with soft labels, image
//! mixing and optional knowledge distillation.

pub mod data;
pub mod loss;
pub mod mixing;
pub mod model;
pub mod numerics;
pub mod trainer;
