use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

fn same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

/// Root mean squared difference over the cells where `eval_mask` is one.
pub fn rmse(estimate: &DenseMatrix, truth: &DenseMatrix, eval_mask: &DenseMatrix) -> Result<f64> {
    same_shape("rmse", estimate, truth)?;
    same_shape("rmse", estimate, eval_mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((e, t), m) in estimate.as_slice().iter().zip(truth.as_slice()).zip(eval_mask.as_slice()) {
        if *m != 0.0 {
            sum += (e - t) * (e - t);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Metric("evaluation mask selects no cells".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// `Σ|Y_ij − Ŷ_ij|` over every cell.
pub fn epsilon_metric(estimate: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    same_shape("epsilon", estimate, truth)?;
    Ok(estimate.as_slice().iter().zip(truth.as_slice()).map(|(e, t)| (e - t).abs()).sum())
}
