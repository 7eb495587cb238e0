//! Error metrics over prediction arrays.

use ndarray::{ArrayBase, Data, Dimension, Zip};

use crate::error::{Error, Result};

fn check<S, T, D>(pred: &ArrayBase<S, D>, truth: &ArrayBase<T, D>) -> Result<()>
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    D: Dimension,
{
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty prediction".into()));
    }
    Ok(())
}

/// Mean squared difference over all elements.
pub fn mse_loss<S, T, D>(pred: &ArrayBase<S, D>, truth: &ArrayBase<T, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    D: Dimension,
{
    check(pred, truth)?;
    let sum = Zip::from(pred)
        .and(truth)
        .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    Ok(sum / pred.len() as f64)
}

/// Mean absolute difference over all elements.
pub fn mae_loss<S, T, D>(pred: &ArrayBase<S, D>, truth: &ArrayBase<T, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    D: Dimension,
{
    check(pred, truth)?;
    let sum = Zip::from(pred)
        .and(truth)
        .fold(0.0, |acc, &p, &t| acc + (p - t).abs());
    Ok(sum / pred.len() as f64)
}
