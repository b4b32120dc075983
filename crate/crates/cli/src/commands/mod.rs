pub mod common;
pub mod concentration;
pub mod probe;
pub mod sweep;
pub mod theory;
