pub mod archive;
pub mod ci;
pub mod diff;
pub mod fixtures;
pub mod minilang;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod repair;
pub mod reproducer;
pub mod scanner;
pub mod vcs;
