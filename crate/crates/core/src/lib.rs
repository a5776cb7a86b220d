pub mod error;
pub mod markov;
pub mod policy;
pub mod baselines;
pub mod harness;
pub mod sim;
