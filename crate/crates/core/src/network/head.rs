use crate::error::{Result, TagiError};
use crate::gaussian::GaussianVector;
use crate::scalar::Scalar;

/// Decoded classification output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Softmax of the output means.
    pub scores: Vec<f64>,
}

/// Argmax of the output means, ties going to the lowest index, with softmax scores.
pub fn classify<T: Scalar>(z_out: &GaussianVector<T>) -> Prediction {
    let means: Vec<f64> = z_out.mean().iter().map(|m| m.to_f64_lossy()).collect();
    let mut label = 0;
    for (i, m) in means.iter().enumerate() {
        if *m > means[label] {
            label = i;
        }
    }
    let top = means.get(label).copied().unwrap_or(0.0);
    let exps: Vec<f64> = means.iter().map(|m| (m - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    Prediction { label, scores: exps.into_iter().map(|e| e / total).collect() }
}

/// One-hot target for `label`, observed through noise `sigma_v` on every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservation<T> {
    pub y: Vec<T>,
    pub sigma_v: f64,
}

pub fn encode_target<T: Scalar>(label: usize, num_classes: usize, sigma_v: f64) -> Result<PseudoObservation<T>> {
    if label >= num_classes {
        return Err(TagiError::precondition(format!("label {label} out of range for {num_classes} classes")));
    }
    let mut y = vec![T::zero(); num_classes];
    y[label] = T::one();
    Ok(PseudoObservation { y, sigma_v })
}
