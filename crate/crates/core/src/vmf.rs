//! von Mises-Fisher distribution on the unit sphere `S^{d-1}` in `R^d`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_ratio, ln_sphere_area, log_bessel_i};

/// Mean direction and concentration of one vMF density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfComponent {
    pub mu: Vec<f64>,
    pub lambda: f64,
}

impl VmfComponent {
    pub fn new(mu: Vec<f64>, lambda: f64) -> Result<Self> {
        if mu.len() < 3 {
            return Err(Error::Domain(format!(
                "vMF needs dimension >= 3, got {}",
                mu.len()
            )));
        }
        let norm2: f64 = mu.iter().map(|m| m * m).sum();
        if !((norm2.sqrt() - 1.0).abs() <= 1e-12) {
            return Err(Error::Domain(format!(
                "mean direction has norm {}",
                norm2.sqrt()
            )));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "concentration must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(VmfComponent { mu, lambda })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_norm_const(&self) -> f64 {
        log_norm_const(self.dim(), self.lambda).expect("validated component")
    }
}

/// `ln c_d(lambda)`, the log normalizer with respect to surface measure.
pub fn log_norm_const(d: usize, lambda: f64) -> Result<f64> {
    if d < 3 {
        return Err(Error::Domain(format!(
            "vMF normalizer needs d >= 3, got {d}"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("negative concentration {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(-ln_sphere_area(d));
    }
    let nu = d as f64 / 2.0 - 1.0;
    Ok(nu * lambda.ln() - (d as f64 / 2.0) * (2.0 * PI).ln() - log_bessel_i(nu, lambda)?)
}

pub fn log_pdf(x: &[f64], comp: &VmfComponent) -> Result<f64> {
    if x.len() != comp.dim() {
        return Err(Error::Dimension {
            expected: comp.dim(),
            got: x.len(),
        });
    }
    Ok(comp.log_norm_const() + comp.lambda * dot(&comp.mu, x))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `A_d(lambda) = I_{d/2}(lambda) / I_{d/2-1}(lambda)`, the expected length
/// of `E[x]`.
pub fn mean_resultant(d: usize, lambda: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "mean resultant needs d >= 2, got {d}"
        )));
    }
    bessel_ratio(d as f64 / 2.0 - 1.0, lambda)
}

/// `-ln c_d(lambda) - lambda`, which takes `E[mu^T x] = 1`.
pub fn component_entropy_paper(comp: &VmfComponent) -> f64 {
    -comp.log_norm_const() - comp.lambda
}

/// Exact differential entropy `-ln c_d(lambda) - lambda A_d(lambda)`.
pub fn component_entropy_corrected(comp: &VmfComponent) -> f64 {
    let a = mean_resultant(comp.dim(), comp.lambda).expect("validated component");
    -comp.log_norm_const() - comp.lambda * a
}

/// Wood's rejection sampler. Precomputes the envelope constants once.
#[derive(Debug, Clone)]
pub struct VmfSampler {
    mu: Vec<f64>,
    lambda: f64,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
    /// `e1 - mu`, or `None` when `mu` already equals `e1`.
    householder: Option<Vec<f64>>,
}

impl VmfSampler {
    pub fn new(comp: &VmfComponent) -> Self {
        let d = comp.dim();
        let m1 = (d - 1) as f64;
        let lambda = comp.lambda;
        let b = m1 / (2.0 * lambda + (4.0 * lambda * lambda + m1 * m1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = lambda * x0 + m1 * (1.0 - x0 * x0).ln();
        let mut u = comp.mu.iter().map(|m| -m).collect::<Vec<_>>();
        u[0] += 1.0;
        let householder = (dot(&u, &u) > 1e-30).then_some(u);
        VmfSampler {
            mu: comp.mu.clone(),
            lambda,
            b,
            x0,
            c,
            beta: Beta::new(m1 / 2.0, m1 / 2.0).expect("positive shape"),
            householder,
        }
    }

    fn sample_cosine<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m1 = (self.mu.len() - 1) as f64;
        loop {
            let z: f64 = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            if self.lambda * w + m1 * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.mu.len();
        let w = self.sample_cosine(rng);
        let mut tangent: Vec<f64> = (1..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&tangent, &tangent).sqrt();
        let scale = (1.0 - w * w).max(0.0).sqrt() / norm;
        tangent.iter_mut().for_each(|t| *t *= scale);
        let mut x = Vec::with_capacity(d);
        x.push(w);
        x.extend(tangent);
        if let Some(u) = &self.householder {
            let coef = 2.0 * dot(u, &x) / dot(u, u);
            x.iter_mut().zip(u).for_each(|(xi, ui)| *xi -= coef * ui);
        }
        x
    }
}

/// Draws `n` unit vectors from `comp`. Samples are not restricted to the
/// nonnegative orthant.
pub fn sample_vmf<R: Rng + ?Sized>(comp: &VmfComponent, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let sampler = VmfSampler::new(comp);
    (0..n).map(|_| sampler.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e1(d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn normalizer_closed_forms() {
        assert_relative_eq!(
            log_norm_const(3, 0.0).unwrap(),
            -(4.0 * PI).ln(),
            max_relative = 1e-14
        );
        assert!((log_norm_const(3, 0.0).unwrap() + 2.53102).abs() < 1e-5);
        let want = (2.0 / (4.0 * PI * 2.0f64.sinh())).ln();
        assert_relative_eq!(log_norm_const(3, 2.0).unwrap(), want, max_relative = 1e-12);
        assert!((want + 3.1265).abs() < 5e-4);
        // lambda -> 0 is continuous with the uniform branch
        for d in [3, 5, 17] {
            assert_relative_eq!(
                log_norm_const(d, 1e-9).unwrap(),
                log_norm_const(d, 0.0).unwrap(),
                max_relative = 1e-8
            );
        }
        assert!(log_norm_const(2, 1.0).is_err());
    }

    #[test]
    fn finite_at_extreme_concentration() {
        for d in [3, 17, 65] {
            for lambda in [1e-8, 1.0, 1e3, 1e4, 1e6] {
                let c = VmfComponent::new(e1(d), lambda).unwrap();
                assert!(c.log_norm_const().is_finite());
                assert!(component_entropy_corrected(&c).is_finite());
                assert!(component_entropy_paper(&c).is_finite());
            }
        }
    }

    #[test]
    fn log_pdf_examples() {
        let c = VmfComponent::new(e1(3), 2.0).unwrap();
        let at_mu = log_pdf(&e1(3), &c).unwrap();
        assert_relative_eq!(
            at_mu,
            (2.0 / (4.0 * PI * 2.0f64.sinh())).ln() + 2.0,
            max_relative = 1e-12
        );
        assert!((at_mu + 1.1265).abs() < 5e-4);
        let uniform = VmfComponent::new(e1(5), 0.0).unwrap();
        let x = unit(vec![0.3, -0.2, 0.9, 0.1, 0.4]);
        assert_relative_eq!(
            log_pdf(&x, &uniform).unwrap(),
            -ln_sphere_area(5),
            max_relative = 1e-14
        );
        assert!(log_pdf(&x, &c).is_err());
        // maximized at mu
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in sample_vmf(&c, 200, &mut rng) {
            assert!(log_pdf(&x, &c).unwrap() <= at_mu);
        }
    }

    #[test]
    fn mean_resultant_properties() {
        assert_eq!(mean_resultant(17, 0.0).unwrap(), 0.0);
        let a = mean_resultant(3, 2.0).unwrap();
        assert_relative_eq!(a, 1.0 / 2.0f64.tanh() - 0.5, max_relative = 1e-12);
        assert!((a - 0.53731).abs() < 1e-5);
        for d in [3, 5, 17, 65] {
            let mut prev = 0.0;
            for i in 1..400 {
                let lambda = 1e-3 * 1.06f64.powi(i);
                let a = mean_resultant(d, lambda).unwrap();
                assert!(a > prev && a < 1.0, "d={d} lambda={lambda}: {a}");
                prev = a;
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let u = VmfComponent::new(e1(3), 0.0).unwrap();
        assert_relative_eq!(
            component_entropy_paper(&u),
            (4.0 * PI).ln(),
            max_relative = 1e-14
        );
        assert_eq!(component_entropy_paper(&u), component_entropy_corrected(&u));

        let c = VmfComponent::new(e1(3), 2.0).unwrap();
        assert!((component_entropy_paper(&c) - 1.1265).abs() < 5e-4);
        assert!((component_entropy_corrected(&c) - 2.0519).abs() < 5e-4);

        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.5, 1.0, 5.0, 20.0, 100.0] {
            let h = component_entropy_paper(&VmfComponent::new(e1(17), lambda).unwrap());
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn sampler_is_deterministic_and_unit_norm() {
        let c = VmfComponent::new(unit(vec![1.0, 2.0, -1.0, 0.5]), 7.0).unwrap();
        let a = sample_vmf(&c, 50, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample_vmf(&c, 50, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        for x in &a {
            assert!((dot(x, x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_sampling_has_small_resultant() {
        let n = 20_000;
        let c = VmfComponent::new(e1(5), 0.0).unwrap();
        let xs = sample_vmf(&c, n, &mut ChaCha8Rng::seed_from_u64(2));
        let mut mean = vec![0.0; 5];
        for x in &xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n as f64);
        }
        assert!(dot(&mean, &mean).sqrt() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn concentrated_sampling_matches_mean_resultant() {
        let d = 17;
        let mu = unit((0..d).map(|i| 1.0 + i as f64 * 0.1).collect());
        let c = VmfComponent::new(mu.clone(), 50.0).unwrap();
        let n = 20_000;
        let xs = sample_vmf(&c, n, &mut ChaCha8Rng::seed_from_u64(4));
        let mut mean = vec![0.0; d];
        for x in &xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n as f64);
        }
        let r = dot(&mean, &mean).sqrt();
        assert!((r - mean_resultant(d, 50.0).unwrap()).abs() < 0.01);
        assert!(dot(&mean, &mu) / r > 0.999);
    }

    #[test]
    fn corrected_entropy_matches_monte_carlo() {
        let c = VmfComponent::new(e1(3), 2.0).unwrap();
        let n = 200_000;
        let xs = sample_vmf(&c, n, &mut ChaCha8Rng::seed_from_u64(8));
        let h_mc = -xs.iter().map(|x| log_pdf(x, &c).unwrap()).sum::<f64>() / n as f64;
        assert!((h_mc - component_entropy_corrected(&c)).abs() < 0.01);
    }
}
