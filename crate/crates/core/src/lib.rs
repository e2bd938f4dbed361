pub mod answer;
pub mod chunker;
pub mod clock;
pub mod condlogic;
pub mod corpus;
pub mod fixtures;
pub mod fieldmap;
pub mod index;
pub mod model;
pub mod schema;
pub mod synthgen;
pub mod text;
