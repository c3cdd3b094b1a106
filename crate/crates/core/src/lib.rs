//! Non-cooperative rate maximization on MIMO Gaussian interference channels:
//! waterfilling best responses, contraction certificates for equilibrium
//! uniqueness, and totally asynchronous iterative waterfilling.

pub mod channel;
pub mod contraction;
pub mod engine;
pub mod instances;
pub mod numerics;
pub mod waterfill;

#[cfg(test)]
mod testutil;
