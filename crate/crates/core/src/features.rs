//! Acoustic quaternions built from filter-bank energies and their time derivatives.
//!
//! For band `f` at frame `t` the quaternion is `(e, Δe, Δ²e, Δ³e)`, where each
//! Δ is the symmetric regression delta over `±N` frames with edge frames
//! replicated.

use crate::error::{Error, Result};
use crate::quat::QuaternionVector;

/// `frames × bands` row-major matrix of log filter-bank energies.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMatrix {
    frames: usize,
    bands: usize,
    values: Vec<f64>,
}

impl EnergyMatrix {
    pub fn new(frames: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if frames == 0 || bands == 0 {
            return Err(Error::Input("energy matrix needs at least one frame and one band".into()));
        }
        if values.len() != frames * bands {
            return Err(Error::shape(&[frames, bands], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("energy matrix contains non-finite values".into()));
        }
        Ok(Self { frames, bands, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let bands = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != bands) {
            return Err(Error::Input(format!("row {i} has {} columns, expected {bands}", r.len())));
        }
        Self::new(rows.len(), bands, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.bands + f]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.bands..(t + 1) * self.bands]
    }
}

/// Regression delta `Σₙ n·(e[t+n] − e[t−n]) / (2 Σₙ n²)` for `n = 1..=window`.
pub fn compute_delta(m: &EnergyMatrix, window: usize) -> Result<EnergyMatrix> {
    if window == 0 {
        return Err(Error::Input("delta window must be at least 1".into()));
    }
    let last = m.frames - 1;
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = vec![0.0; m.values.len()];
    for t in 0..m.frames {
        let dst = &mut out[t * m.bands..(t + 1) * m.bands];
        for n in 1..=window {
            let ahead = m.row((t + n).min(last));
            let behind = m.row(t.saturating_sub(n));
            for ((d, a), b) in dst.iter_mut().zip(ahead).zip(behind) {
                *d += n as f64 * (a - b);
            }
        }
        dst.iter_mut().for_each(|d| *d /= denom);
    }
    EnergyMatrix::new(m.frames, m.bands, out)
}

/// One split-layout vector of `bands` quaternions per frame.
pub fn pack_features(m: &EnergyMatrix, window: usize) -> Result<Vec<QuaternionVector>> {
    let d1 = compute_delta(m, window)?;
    let d2 = compute_delta(&d1, window)?;
    let d3 = compute_delta(&d2, window)?;
    (0..m.frames)
        .map(|t| {
            let mut c = Vec::with_capacity(4 * m.bands);
            for view in [m, &d1, &d2, &d3] {
                c.extend_from_slice(view.row(t));
            }
            QuaternionVector::from_components(c)
        })
        .collect()
}
