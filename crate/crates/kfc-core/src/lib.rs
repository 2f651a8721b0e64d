//! Deterministic desk-scale simulator of blockchain-coordinated federated
//! learning under adversarial clients.
//!
//! The crate models a federated network whose miners coordinate through a
//! hash-chained ledger. Clients train small softmax or MLP classifiers on
//! IID shards; adversaries flip labels or inject a pattern-key backdoor and
//! may scale their update for model replacement. Per-round winners are
//! chosen by proof of work, proof of stake, or proof of federated learning
//! (the pool with the most accurate model on a shared validation split), and
//! the `kfc` architecture combines Krum aggregation inside each pool with
//! the accuracy contest across pools.
//!
//! Everything is a pure function of the configuration: a master seed derives
//! every stream of randomness, so two runs with the same configuration are
//! byte-identical.
//!
//! Module map:
//! - [`mlcore`]: models, analytic gradients, SGD, accuracy.
//! - [`data`]: synthetic blobs, CSV loading, splits, shards, poisoning.
//! - [`aggregate`]: FedAvg, Krum, coordinate-wise trimmed mean.
//! - [`attack`]: adversarial local training and the replacement boost.
//! - [`chain`]: the ledger and the PoW/PoS/PoFL selectors.
//! - [`sim`]: round orchestration and metrics.

pub mod aggregate;
pub mod attack;
pub mod chain;
pub mod data;
pub mod error;
pub mod mlcore;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
