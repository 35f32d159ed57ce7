//! Cross-entropy loss with log-sum-exp stabilization.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{real_of_usize, Real};

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits: `dlogits = (softmax - onehot) / batch`.
pub fn cross_entropy<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    let n = logits.rows();
    let classes = logits.cols();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            context: "cross_entropy labels".into(),
            expected: format!("{n} labels"),
            actual: format!("{}", labels.len()),
        });
    }
    let batch = real_of_usize::<T>(n);
    let mut dlogits = Matrix::zeros(n, classes);
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for &z in row {
            sum += (z - max).exp();
        }
        let log_sum = max + sum.ln();
        loss += log_sum - row[label];
        let drow = dlogits.row_mut(i);
        for (j, &z) in row.iter().enumerate() {
            let p = (z - log_sum).exp();
            drow[j] = p / batch;
        }
        drow[label] = drow[label] - T::one() / batch;
    }
    Ok((loss / batch, dlogits))
}
