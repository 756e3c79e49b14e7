pub mod eval;
pub mod label;
pub mod render;
pub mod smooth;
pub mod synth;
pub mod train;
