//! Domain adaptation for maximum-entropy classifiers.
//!
//! The central model mixes three log-linear classifiers: one specific to the
//! in-domain data, one specific to the out-of-domain data, and one shared
//! ("general") component used by both. Each instance carries a latent
//! indicator choosing between the shared component and its domain-specific
//! component. Training uses conditional expectation maximization; the inputs
//! are modelled with naive-Bayes Bernoulli vectors so that the mixing weight
//! at prediction time depends on the input.
//!
//! Module map:
//!
//! * [`corpus`]: data model, file formats, splits, synthetic corpora, feature selection
//! * [`optim`]: L-BFGS, bounded quadratic stationarity solver, golden section, finite differences
//! * [`maxent`]: weighted, Gaussian-penalized multiclass logistic regression
//! * [`mega`]: the three-component mixture and its CEM training loop
//! * [`chain`]: MEMM tagging, plain and mixture variants, Viterbi decoding
//! * [`baselines`]: the seven comparison systems
//! * [`eval`]: metrics, McNemar's test, cross validation, learning curves
//! * [`container`]: text serialization shared by every trained model
//! * [`system`]: uniform training front end used by the CLI and the evaluation harness

pub mod baselines;
pub mod chain;
pub mod container;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod maxent;
pub mod mega;
pub mod optim;
pub mod par;
pub mod system;

pub use error::{Error, Result};

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Max-shifted log-sum-exp over a slice. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
