pub mod augment;
pub mod budget;
pub mod datagen;
pub mod eval;
pub mod infer;
pub mod merge;
pub mod train;
