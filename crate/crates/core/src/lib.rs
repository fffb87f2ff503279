//! Optimal e-graph extraction through weighted monotone circuits and
//! dynamic programming over tree decompositions.

pub mod circuit;
pub mod egraph;
pub mod fixtures;
pub mod oracle;
pub mod gen;
pub mod treewidth;
pub mod dp;
pub mod simplify;
pub mod pipeline;
