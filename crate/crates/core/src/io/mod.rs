//! Text and binary file formats.

pub mod checkpoint;
pub mod runconfig;
pub mod seqfile;
pub mod skeleton;
