pub mod corpus;
pub mod encoding;
pub mod evalx;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod seed;
pub mod trainer;
