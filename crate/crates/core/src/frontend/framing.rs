use std::f64::consts::PI;

use super::{AnalysisConfig, WindowKind};
use crate::error::{Error, Result};

/// First-order pre-emphasis `y[n] = x[n] - alpha x[n-1]`.
pub fn preemphasize(samples: &[f64], alpha: f64) -> Vec<f64> {
    if alpha == 0.0 {
        return samples.to_vec();
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = 0.0;
    for &s in samples {
        out.push(s - alpha * prev);
        prev = s;
    }
    out
}

pub fn window(kind: WindowKind, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let c = (2.0 * PI * n as f64 / denom).cos();
            match kind {
                WindowKind::Hamming => 0.54 - 0.46 * c,
                WindowKind::Hann => 0.5 - 0.5 * c,
                WindowKind::Rectangular => 1.0,
            }
        })
        .collect()
}

/// `floor((n - w) / s) + 1`, or zero when the signal is shorter than a window.
pub fn frame_count(n: usize, window_len: usize, step: usize) -> usize {
    if n < window_len || step == 0 {
        0
    } else {
        (n - window_len) / step + 1
    }
}

pub fn frame_signal(samples: &[f64], config: &AnalysisConfig) -> Result<Vec<Vec<f64>>> {
    let w = config.window_len();
    let s = config.step_len();
    if w == 0 || s == 0 {
        return Err(Error::Config(
            "window and step must span at least one sample".into(),
        ));
    }
    let count = frame_count(samples.len(), w, s);
    if count == 0 {
        return Err(Error::SignalTooShort {
            got: samples.len(),
            window: w,
        });
    }
    let win = window(config.window_kind, w);
    Ok((0..count)
        .map(|i| {
            samples[i * s..i * s + w]
                .iter()
                .zip(&win)
                .map(|(x, g)| x * g)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> AnalysisConfig {
        AnalysisConfig::default()
    }

    #[test]
    fn one_second_at_16k() {
        let c = cfg();
        assert_eq!((c.window_len(), c.step_len()), (400, 320));
        assert_eq!(frame_signal(&vec![0.1; 16_000], &c).unwrap().len(), 49);
    }

    #[test]
    fn window_boundary() {
        let c = cfg();
        assert_eq!(frame_signal(&vec![0.1; 400], &c).unwrap().len(), 1);
        assert!(matches!(
            frame_signal(&vec![0.1; 399], &c),
            Err(Error::SignalTooShort {
                got: 399,
                window: 400
            })
        ));
    }

    #[test]
    fn frames_are_windowed() {
        let mut c = cfg();
        c.window_kind = WindowKind::Hann;
        let frames = frame_signal(&vec![1.0; 1000], &c).unwrap();
        assert_eq!(frames[0][0], 0.0);
        assert!((frames[0][399]).abs() < 1e-15);
        assert_eq!(frames[0], window(WindowKind::Hann, 400));
    }

    #[test]
    fn preemphasis_filter() {
        assert_eq!(preemphasize(&[1.0, 1.0, 0.0], 0.5), vec![1.0, 0.5, -0.5]);
    }

    proptest! {
        #[test]
        fn frame_count_formula(w in 1usize..200, s in 1usize..200, extra in 0usize..2000) {
            let n = w + extra;
            let expected = (n - w) / s + 1;
            prop_assert_eq!(frame_count(n, w, s), expected);
            // last frame fits, one more does not
            prop_assert!((expected - 1) * s + w <= n);
            prop_assert!(expected * s + w > n);
        }
    }
}
