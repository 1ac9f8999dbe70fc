//! Significance tests for local outliers in reversible Markov chains.
//!
//! A state `sigma0` is an *ε-outlier* among labels `a_0..a_k` when
//! `#{i : a_i <= a_0} <= ε (k + 1)`. The tests here observe how extreme
//! `sigma0`'s label is among states reached by short walks from it and turn
//! that observation into a p-value that holds for any reversible chain,
//! mixed or not:
//!
//! | test | comparison states | p-value |
//! |------|-------------------|---------|
//! | single trajectory | `X_0..X_k` | `sqrt(2ε)` |
//! | serial | two walks of random complementary lengths | `ε` |
//! | two-path | two walks of length `k` | `2ε` |
//! | parallel | endpoints of `m - 1` branches | `ε` |
//! | star-split | every exposed state except the branch point | `ε` |
//! | (ε, α) multi-trajectory | `m` walks, `t`-th smallest ε | binomial tail |
//! | product serial / two-path | products of per-component walks | `ε` / `2^d ε` |
//!
//! [`oracle`] computes every underlying probability exactly on small explicit
//! chains and audits the bounds; [`product`] holds the product-space tests and
//! exact seat-count convolution; [`zoo`] provides chain families including a
//! toy grid-districting chain.

pub mod chain;
pub mod cli;
pub mod error;
pub mod oracle;
pub mod product;
pub mod sampling;
pub mod significance;
pub mod zoo;

pub use chain::{Edge, LabeledChain, StateId};
pub use error::{Error, Result};
pub use sampling::{ChainSampler, RngSeed};
pub use significance::{OutlierObservation, SignificanceReport};


