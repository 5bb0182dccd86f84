pub mod batch;
pub mod geometry;
pub mod perception;
pub mod run;
pub mod scenario;
