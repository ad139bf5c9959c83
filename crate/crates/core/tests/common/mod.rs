pub mod gradcheck;
pub mod merge_oracle;
