use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};

/// Per-channel root mean square error between two equally long series.
pub fn rmse<T: Real>(estimate: &[DVector<T>], truth: &[DVector<T>]) -> Result<Vec<T>> {
    if estimate.is_empty() {
        return Err(Error::Empty("estimate series"));
    }
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse series length",
            expected: (truth.len(), 1),
            actual: (estimate.len(), 1),
        });
    }
    let channels = truth[0].len();
    let mut acc = vec![T::zero(); channels];
    for (e, t) in estimate.iter().zip(truth) {
        if e.len() != channels || t.len() != channels {
            return Err(Error::DimensionMismatch {
                context: "rmse channel count",
                expected: (channels, 1),
                actual: (e.len(), t.len()),
            });
        }
        for (a, (ei, ti)) in acc.iter_mut().zip(e.iter().zip(t.iter())) {
            let diff = *ei - *ti;
            *a += diff * diff;
        }
    }
    let n = from_usize::<T>(estimate.len());
    Ok(acc.into_iter().map(|s| (s / n).sqrt()).collect())
}
