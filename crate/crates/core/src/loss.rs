//! Softmax cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(logits: &Tensor, targets: &[usize]) -> Result<(usize, usize)> {
    let (rows, classes) = logits.dims2()?;
    if rows != targets.len() {
        return Err(Error::shape(&[rows], &[targets.len()]));
    }
    if let Some(bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::Input(format!("target index {bad} out of range for {classes} classes")));
    }
    Ok((rows, classes))
}

fn log_softmax_row(row: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(move |v| v - lse)
}

/// Mean over rows of `−log softmax(logits_r)[target_r]`.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let (rows, classes) = check(logits, targets)?;
    if rows == 0 {
        return Ok(0.0);
    }
    let total: f64 = logits
        .data()
        .chunks(classes)
        .zip(targets)
        .map(|(row, &t)| -log_softmax_row(row).nth(t).expect("target checked"))
        .sum();
    Ok(total / rows as f64)
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub fn cross_entropy_grad(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (rows, classes) = check(logits, targets)?;
    let mut out = Tensor::zeros(&[rows, classes]);
    let inv = 1.0 / rows.max(1) as f64;
    for ((row, &t), dst) in logits.data().chunks(classes).zip(targets).zip(out.data_mut().chunks_mut(classes)) {
        for (k, (d, lp)) in dst.iter_mut().zip(log_softmax_row(row)).enumerate() {
            let indicator = if k == t { 1.0 } else { 0.0 };
            *d = (lp.exp() - indicator) * inv;
        }
    }
    Ok(out)
}
