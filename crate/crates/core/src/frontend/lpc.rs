use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative white-noise floor added to `r[0]` before the recursion.
const AUTOCORR_FLOOR: f64 = 1e-6;

/// Order-K predictor with `A(z) = 1 - sum_k a_k z^{-k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcVector {
    pub coeffs: Vec<f64>,
    /// Final prediction-error energy.
    pub gain: f64,
}

impl LpcVector {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| {
            if lag >= frame.len() {
                0.0
            } else {
                frame[lag..].iter().zip(frame).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Levinson-Durbin recursion on an autocorrelation sequence `r[0..=order]`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcVector> {
    if r.len() < order + 1 {
        return Err(Error::Dimension {
            expected: order + 1,
            got: r.len(),
        });
    }
    if !(r[0] > 0.0) {
        return Err(Error::UnstableFrame {
            stage: 0,
            k: f64::NAN,
        });
    }
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut err = r[0];
    for i in 0..order {
        let acc: f64 = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / err;
        if !(k.abs() < 1.0) {
            return Err(Error::UnstableFrame { stage: i + 1, k });
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    Ok(LpcVector {
        coeffs: a,
        gain: err,
    })
}

/// Autocorrelation LPC of one windowed frame, with the white-noise floor.
pub fn lpc_from_frame(frame: &[f64], order: usize) -> Result<LpcVector> {
    let mut r = autocorrelation(frame, order);
    r[0] *= 1.0 + AUTOCORR_FLOOR;
    levinson_durbin(&r, order)
}

/// Step-up recursion: reflection coefficients (all `|k| < 1`) to a stable predictor.
pub fn lpc_from_reflection(reflection: &[f64]) -> Result<Vec<f64>> {
    let mut a: Vec<f64> = Vec::with_capacity(reflection.len());
    for (i, &k) in reflection.iter().enumerate() {
        if !(k.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "reflection coefficient {k} at stage {}",
                i + 1
            )));
        }
        let prev = a.clone();
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a.push(k);
    }
    Ok(a)
}
