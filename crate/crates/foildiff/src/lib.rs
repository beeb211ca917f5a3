pub mod archive;
pub mod config;
pub mod pipeline;
pub mod svg;
