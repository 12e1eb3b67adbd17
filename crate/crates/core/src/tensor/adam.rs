//! Adam with bias correction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers per parameter plus the shared step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: std::collections::BTreeMap<String, Vec<T>>,
    pub second: std::collections::BTreeMap<String, Vec<T>>,
}
