//! Statistical verification of stochastic hybrid systems.
//!
//! The library reduces continuous- and discrete-time stochastic hybrid
//! systems to finite Markov chains on a grid partition, bounds the reduction
//! error, strengthens MITL/iLTL specifications by that error, and decides the
//! strengthened specification with sequential statistical tests and
//! automata-based monitoring.

pub mod automata;
pub mod checker;
pub mod expr;
pub mod geom;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod presets;
pub mod reduction;
pub mod implicit;
pub mod intervals;
pub mod logic;
pub mod markov;
pub mod rng;
pub mod signal;
pub mod stats;
