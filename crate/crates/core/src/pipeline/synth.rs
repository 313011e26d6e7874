//! Synthetic corpora for self-contained runs: speech-like audio and
//! LSF vectors drawn from a known vMF mixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::frontend::{lpc_from_reflection, LsfVector};
use crate::mixture::VmfMixture;
use crate::transforms::{srdlsf_to_lsf, SphereVector};
use crate::vmf::VmfComponent;

/// Order of the all-pole filters shaping the synthetic speech.
const SYNTH_ORDER: usize = 10;

/// Speech-like signal: a sequence of 60–200 ms segments, each an all-pole
/// filter driven by a pulse train (voiced) or white noise (unvoiced), with a
/// smooth amplitude envelope. Peak amplitude is normalized to 0.8.
pub fn synth_speech(seconds: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * sample_rate as f64).round() as usize;
    let fs = sample_rate as f64;
    let mut out = Vec::with_capacity(n);
    let mut history = [0.0f64; SYNTH_ORDER];
    let mut phase = 0.0f64;
    while out.len() < n {
        let len = ((rng.random_range(0.06..0.2) * fs) as usize)
            .min(n - out.len())
            .max(1);
        let mut reflection = [0.0f64; SYNTH_ORDER];
        reflection[0] = rng.random_range(0.5..0.95);
        for k in reflection.iter_mut().skip(1) {
            *k = rng.random_range(-0.7..0.7);
        }
        let a = lpc_from_reflection(&reflection)
            .expect("reflection coefficients are inside the unit interval");
        let voiced = rng.random_bool(0.6);
        let pitch = rng.random_range(90.0..240.0) / fs;
        let level = rng.random_range(0.2..1.0);
        for i in 0..len {
            let t = i as f64 / len as f64;
            let envelope = level * (std::f64::consts::PI * t).sin().max(0.05);
            let noise: f64 = rng.sample(StandardNormal);
            let excitation = if voiced {
                phase += pitch;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                pulse + 0.05 * noise
            } else {
                0.3 * noise
            };
            let y = envelope * excitation + a.iter().zip(&history).map(|(c, h)| c * h).sum::<f64>();
            history.rotate_right(1);
            history[0] = y;
            out.push(y);
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.8 / peak);
    }
    out
}

/// A four-component vMF mixture on the SRΔLSF sphere of order `order`,
/// with mean directions scattered around the equal-spacing direction and
/// concentrations 50, 100, 200 and 400.
pub fn reference_vmm(order: usize, seed: u64) -> Result<VmfMixture> {
    if order < 2 {
        return Err(Error::Domain("order must be at least 2".into()));
    }
    let d = order + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = 1.0 / (d as f64).sqrt();
    let components = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .map(|&lambda| {
            let raw: Vec<f64> = (0..d)
                .map(|_| (centre + 0.15 * centre * rng.sample::<f64, _>(StandardNormal)).abs())
                .collect();
            let mu = SphereVector::from_direction(&raw)?.into_inner();
            VmfComponent::new(mu, lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    VmfMixture::new(vec![0.25; 4], components)
}

/// Draws `n` LSF vectors by sampling `model`, folding each sample into the
/// nonnegative orthant and lifting it back to LSFs. Samples whose LSFs are
/// not strictly ordered in floating point are redrawn; returns the vectors
/// and the number of redraws.
pub fn sample_lsf_corpus(
    model: &VmfMixture,
    n: usize,
    seed: u64,
) -> Result<(Vec<LsfVector>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(n);
    let mut redraws = 0usize;
    while vectors.len() < n {
        let batch = model.sample(n - vectors.len(), &mut rng);
        for x in batch {
            match SphereVector::from_direction(&x).and_then(|s| srdlsf_to_lsf(&s)) {
                Ok(v) => vectors.push(v),
                Err(_) => redraws += 1,
            }
        }
        if redraws > 10 * n.max(100) {
            return Err(Error::Domain(
                "model mass lies on the boundary of the LSF domain".into(),
            ));
        }
    }
    Ok((vectors, redraws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{extract_lsf, AnalysisConfig};
    use crate::mixture::MixtureDensity;

    #[test]
    fn synthetic_speech_is_analysable() {
        let x = synth_speech(2.0, 16_000, 3);
        assert_eq!(x.len(), 32_000);
        assert!(x.iter().all(|v| v.abs() <= 0.8 + 1e-12));
        assert_eq!(x, synth_speech(2.0, 16_000, 3));
        let e = extract_lsf(&x, &AnalysisConfig::default()).unwrap();
        assert_eq!(e.frames, 99);
        assert!(e.vectors.len() >= 95, "{} of {}", e.vectors.len(), e.frames);
    }

    #[test]
    fn reference_mixture_shape() {
        let m = reference_vmm(16, 0).unwrap();
        assert_eq!(m.dim(), 17);
        assert_eq!(m.n_components(), 4);
        for c in m.components() {
            assert!(c.mu.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn sampled_corpus_is_valid_and_seeded() {
        let m = reference_vmm(16, 1).unwrap();
        let (a, _) = sample_lsf_corpus(&m, 500, 9).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, sample_lsf_corpus(&m, 500, 9).unwrap().0);
    }
}
