pub mod binio;
pub mod cli;
pub mod corpus;
pub mod docgraph;
pub mod downstream;
pub mod embedding;
pub mod gin;
pub mod metrics;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod topicmodel;
