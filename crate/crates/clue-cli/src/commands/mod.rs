pub mod explain;
pub mod grid;
pub mod robustness;
pub mod train;
pub mod validate;
