//! One-vs-rest linear SVM and its dual coordinate descent solver.

pub mod dcd;
mod ovr;

pub use ovr::{train_ovr, SvmConfig, SvmOvrModel};
