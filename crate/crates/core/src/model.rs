//! The black-box interface every explainer evaluates.

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::shap;

/// A binary probabilistic classifier over fixed-width real feature vectors.
pub trait Classifier: Sync {
    fn n_features(&self) -> usize;

    /// Class probabilities `[p0, p1]` for a row of `n_features` finite values.
    /// Callers validate the row; see [`check_instance`].
    fn proba(&self, row: &[f64]) -> [f64; 2];

    /// Coalition values `v(S)` for every feature subset, indexed by bitmask:
    /// the mean class probability over `background` rows with the features
    /// in `S` replaced by the instance's values.
    ///
    /// The default evaluates each composed row through [`Classifier::proba`];
    /// models with exploitable structure may override it.
    fn coalition_table(
        &self,
        instance: &[f64],
        background: &TabularDataset,
        class_index: usize,
    ) -> Vec<f64> {
        shap::composed_coalition_table(self, instance, background, class_index)
    }
}

/// Checks dimensionality and finiteness of an instance.
pub fn check_instance(n_features: usize, instance: &[f64]) -> Result<()> {
    if instance.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: instance.len(),
        });
    }
    if let Some(index) = instance.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

pub(crate) fn check_class(class_index: usize) -> Result<()> {
    if class_index > 1 {
        return Err(Error::ClassIndex(class_index));
    }
    Ok(())
}

/// Wraps a closure returning the class-1 probability.
pub struct FnClassifier<F> {
    n_features: usize,
    f: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F> Classifier for FnClassifier<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn proba(&self, row: &[f64]) -> [f64; 2] {
        let p1 = (self.f)(row);
        [1.0 - p1, p1]
    }
}
