//! Entropy, mutual information and posterior sampling divergence, in nats.
//!
//! Closed forms are used for the linear-Gaussian family; everything else
//! goes through nested Monte Carlo or nearest-neighbour entropies.

mod decomp;
pub(crate) mod evidence;
mod gaussian;
mod knn;
mod mc;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use decomp::{mi_decomposition, weak_id_verdict, MiBudget, MiDecomposition, WeakId};
pub use gaussian::{gaussian_entropy, gaussian_mi_cmi, GaussianFamily, GaussianInfo, JointGaussian};
pub use knn::{knn_entropy, knn_entropy_weighted};
pub use mc::{estimate_cmi, estimate_psd, ppd_logdensity, CmiConfig, PsdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    NestedMc,
    Knn,
    Grid,
    /// Prior-averaged Fisher information.
    Fisher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoEstimate {
    pub quantity: String,
    pub value: f64,
    #[serde(rename = "se")]
    pub std_error: f64,
    pub method: Method,
    pub config: BTreeMap<String, f64>,
}

impl InfoEstimate {
    pub fn analytic(quantity: impl Into<String>, value: f64) -> Self {
        Self { quantity: quantity.into(), value, std_error: 0.0, method: Method::Analytic, config: BTreeMap::new() }
    }

    pub(crate) fn mc(quantity: impl Into<String>, value: f64, se: f64, method: Method, config: &[(&str, f64)]) -> Self {
        Self {
            quantity: quantity.into(),
            value,
            std_error: se,
            method,
            config: config.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// |value − target| within `k` standard errors (exact match when analytic).
    pub fn agrees(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
