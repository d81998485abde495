//! Core of the UI trajectory simulator.
//!
//! Everything here is allocation-only and free of IO: accessibility-tree
//! states and their text formats, the action grammar, rule-based transitions
//! and viewport observation, BM25 hybrid retrieval, the model-backed world
//! simulator, guided rollout, trajectory wrapping and the targeted scaling
//! math. Model backends are reached through the traits in [`client`].

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod actions;
pub mod axtree;
pub mod client;
pub mod grow;
pub mod prompt;
pub mod retrieval;
pub mod rollout;
pub mod scripted;
pub mod simulator;
pub mod testing;
pub mod transition;
pub mod wrapper;
