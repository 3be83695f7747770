pub mod audit;
pub mod demo;
pub mod distances;
pub mod evolve;
pub mod graph;
pub mod par;
pub mod properties;
pub mod refexec;
pub mod sample;
pub mod synth;
pub mod theory;
