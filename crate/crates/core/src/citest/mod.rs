//! Conditional-dependence tests.
//!
//! Two families are provided: the Gaussian partial-correlation test on the
//! Fisher z scale, and the kernel Hilbert-Schmidt conditional dependence
//! statistic `H_n` with a permutation-calibrated or fixed threshold.

mod hsic;
pub(crate) mod partial;

use serde::{Deserialize, Serialize};

pub use hsic::{hs_ci_test, hs_statistic, median_bandwidth, HsEngine};
pub use partial::{
    fisher_z, gaussian_ci_test, gaussian_threshold, partial_correlation,
    partial_correlation_from_cov,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiTestKind {
    PartialCorrelation,
    HilbertSchmidt,
}

/// Which quantity decides the test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// Significance level `alpha`.
    Level(f64),
    /// Direct threshold `gamma` on the statistic.
    Fixed(f64),
}

/// Quantile convention for the level-driven Gaussian threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    /// `Phi^-1(1 - alpha/2) / sqrt(N - |K| - 3)`.
    #[default]
    TwoSided,
    /// `Phi^-1(1 - alpha) / sqrt(N - |K| - 3)`, the one-sided quantile.
    OneSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Per-variable RBF width equal to the median pairwise distance.
    MedianHeuristic,
    /// The same RBF width for every variable.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct CiTestConfig {
    pub kind: CiTestKind,
    pub threshold: Threshold,
    pub sidedness: Sidedness,
    /// `e` in `epsilon_n = c * N^-e`.
    pub epsilon_exponent: f64,
    /// `c` in `epsilon_n = c * N^-e`.
    pub epsilon_scale: f64,
    pub bandwidth: Bandwidth,
    /// Permutations used to calibrate the Hilbert-Schmidt threshold.
    pub permutations: usize,
}

impl Default for CiTestConfig {
    fn default() -> Self {
        Self::gaussian(0.05)
    }
}

impl CiTestConfig {
    pub fn gaussian(alpha: f64) -> Self {
        Self {
            kind: CiTestKind::PartialCorrelation,
            threshold: Threshold::Level(alpha),
            sidedness: Sidedness::TwoSided,
            epsilon_exponent: 0.25,
            epsilon_scale: 0.1,
            bandwidth: Bandwidth::MedianHeuristic,
            permutations: 200,
        }
    }

    pub fn hilbert_schmidt(alpha: f64) -> Self {
        Self {
            kind: CiTestKind::HilbertSchmidt,
            ..Self::gaussian(alpha)
        }
    }

    /// Regularization `epsilon_n = c * N^-e` for `N` samples.
    pub fn epsilon(&self, n: usize) -> f64 {
        self.epsilon_scale * (n as f64).powf(-self.epsilon_exponent)
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::InvalidInput;
        match self.threshold {
            Threshold::Level(a) if !(a > 0.0 && a < 1.0) => {
                return Err(InvalidInput(format!("alpha = {a} outside (0, 1)")))
            }
            Threshold::Fixed(g) if !(g > 0.0 && g.is_finite()) => {
                return Err(InvalidInput(format!("gamma = {g} must be positive")))
            }
            _ => {}
        }
        if self.kind == CiTestKind::HilbertSchmidt {
            if !(self.epsilon_scale > 0.0) {
                return Err(InvalidInput("epsilon scale must be positive".into()));
            }
            if !(self.epsilon_exponent > 0.0 && self.epsilon_exponent < 1.0 / 3.0) {
                return Err(InvalidInput(format!(
                    "epsilon exponent {} outside (0, 1/3)",
                    self.epsilon_exponent
                )));
            }
            if let Bandwidth::Fixed(s) = self.bandwidth {
                if !(s > 0.0) {
                    return Err(InvalidInput("kernel bandwidth must be positive".into()));
                }
            }
            if matches!(self.threshold, Threshold::Level(_)) && self.permutations == 0 {
                return Err(InvalidInput(
                    "permutation calibration needs at least one permutation".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one test; `dependent == (|statistic| > threshold)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CiDecision<T> {
    pub statistic: T,
    pub threshold: T,
    pub dependent: bool,
}

impl<T: crate::Real> CiDecision<T> {
    pub fn new(statistic: T, threshold: T) -> Self {
        Self {
            statistic,
            threshold,
            dependent: statistic.abs() > threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_epsilon_schedule() {
        let c = CiTestConfig::hilbert_schmidt(0.05);
        assert!((c.epsilon(10_000) - 0.01).abs() < 1e-15);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = CiTestConfig::gaussian(1.5);
        assert!(c.validate().is_err());
        c = CiTestConfig::hilbert_schmidt(0.05);
        c.epsilon_exponent = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn decision_invariant() {
        let d = CiDecision::new(-0.3_f64, 0.2);
        assert!(d.dependent);
        assert!(!CiDecision::new(0.2_f64, 0.2).dependent);
    }
}
