pub mod classify;
pub mod docembed;
pub mod features;
pub mod hetgraph;
pub mod pipeline;
pub mod project;
pub mod sampling;
pub mod seed;
pub mod synth;
pub mod sgns;
