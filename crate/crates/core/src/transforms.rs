//! Maps between the LSF, normalized ΔLSF and square-root ΔLSF (unit sphere)
//! representations, and the high-rate distortion conversions between them.
//!
//! ΔLSF increments are normalized by `pi` so that they sum to less than one
//! and the square-root lift lands on the unit sphere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::LsfVector;

/// Tolerance on the squared norm of a [`SphereVector`].
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Positive normalized LSF increments with `sum < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLsf(Vec<f64>);

impl DeltaLsf {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain(format!(
                "ΔLSF entries must be positive: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if !(sum < 1.0) {
            return Err(Error::Domain(format!(
                "ΔLSF entries sum to {sum}, need < 1"
            )));
        }
        Ok(DeltaLsf(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// The `K+1` simplex point `(v_1, .., v_K, 1 - sum v)`.
    pub fn completed(&self) -> Vec<f64> {
        let mut out = self.0.clone();
        out.push(1.0 - self.0.iter().sum::<f64>());
        out
    }
}

/// Nonnegative unit vector in `K+1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereVector(Vec<f64>);

impl SphereVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(
                "sphere vector needs at least two coordinates".into(),
            ));
        }
        if values.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Domain(format!(
                "sphere vector has negative entries: {values:?}"
            )));
        }
        let norm2: f64 = values.iter().map(|x| x * x).sum();
        if !((norm2 - 1.0).abs() <= UNIT_NORM_TOL) {
            return Err(Error::Domain(format!(
                "sphere vector squared norm {norm2} is not 1"
            )));
        }
        Ok(SphereVector(values))
    }

    /// Folds an arbitrary nonzero vector into the nonnegative orthant and
    /// normalizes it.
    pub fn from_direction(values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        SphereVector::new(values.iter().map(|x| x.abs() / norm).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionDomain {
    Srdlsf,
    Dlsf,
    Lsf,
}

/// Mean squared error in one of the three domains (rad² for LSF).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionValue {
    pub domain: DistortionDomain,
    pub value: f64,
}

impl DistortionValue {
    pub fn new(domain: DistortionDomain, value: f64) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(Error::Domain(format!(
                "distortion must be nonnegative, got {value}"
            )));
        }
        Ok(DistortionValue { domain, value })
    }
}

pub fn lsf_to_delta(s: &LsfVector) -> DeltaLsf {
    let mut prev = 0.0;
    let values = s
        .values()
        .iter()
        .map(|&x| {
            let d = (x - prev) / PI;
            prev = x;
            d
        })
        .collect();
    DeltaLsf(values)
}

pub fn delta_to_lsf(v: &DeltaLsf) -> Result<LsfVector> {
    let mut acc = 0.0;
    let values = v
        .values()
        .iter()
        .map(|d| {
            acc += d;
            PI * acc
        })
        .collect();
    LsfVector::new(values)
}

pub fn delta_to_srdlsf(v: &DeltaLsf) -> SphereVector {
    let mut x: Vec<f64> = v.values().iter().map(|d| d.sqrt()).collect();
    let rest = 1.0 - v.values().iter().sum::<f64>();
    x.push(rest.sqrt());
    SphereVector(x)
}

pub fn srdlsf_to_delta(x: &SphereVector) -> Result<DeltaLsf> {
    let (last, head) = x
        .values()
        .split_last()
        .expect("sphere vector has >= 2 entries");
    if *last == 0.0 {
        return Err(Error::Domain(
            "last sphere coordinate is zero: the LSF vector would reach pi".into(),
        ));
    }
    DeltaLsf::new(head.iter().map(|c| c * c).collect())
}

pub fn lsf_to_srdlsf(s: &LsfVector) -> SphereVector {
    delta_to_srdlsf(&lsf_to_delta(s))
}

pub fn srdlsf_to_lsf(x: &SphereVector) -> Result<LsfVector> {
    delta_to_lsf(&srdlsf_to_delta(x)?)
}

/// Diagonal of `d(v)/d(x)` for `v = x^2`, evaluated at `x = sqrt(v)`.
pub fn jacobian_diag(v: &DeltaLsf) -> Vec<f64> {
    v.values().iter().map(|d| 2.0 * d.sqrt()).collect()
}

fn expect_domain(d: &DistortionValue, domain: DistortionDomain) -> Result<()> {
    if d.domain != domain {
        return Err(Error::Domain(format!(
            "expected a {domain:?} distortion, got {:?}",
            d.domain
        )));
    }
    Ok(())
}

fn check_mean_sum(mean_sum_v: f64) -> Result<()> {
    if !(mean_sum_v > 0.0 && mean_sum_v < 1.0) {
        return Err(Error::Domain(format!(
            "mean sum of ΔLSF must lie in (0, 1), got {mean_sum_v}"
        )));
    }
    Ok(())
}

/// `D_v = (4/K) D_x E[sum_k v_k]` under white quantization noise in the
/// square-root domain.
pub fn distortion_x_to_v(
    dx: DistortionValue,
    mean_sum_v: f64,
    order: usize,
) -> Result<DistortionValue> {
    expect_domain(&dx, DistortionDomain::Srdlsf)?;
    check_mean_sum(mean_sum_v)?;
    DistortionValue::new(
        DistortionDomain::Dlsf,
        4.0 / order as f64 * dx.value * mean_sum_v,
    )
}

pub fn distortion_v_to_x(
    dv: DistortionValue,
    mean_sum_v: f64,
    order: usize,
) -> Result<DistortionValue> {
    expect_domain(&dv, DistortionDomain::Dlsf)?;
    check_mean_sum(mean_sum_v)?;
    DistortionValue::new(
        DistortionDomain::Srdlsf,
        dv.value * order as f64 / (4.0 * mean_sum_v),
    )
}

/// White ΔLSF noise pushed through `s = pi * cumsum(v)`: `D_s = pi^2 (K+1)/2 D_v`.
pub fn distortion_v_to_s(dv: DistortionValue, order: usize) -> Result<DistortionValue> {
    expect_domain(&dv, DistortionDomain::Dlsf)?;
    DistortionValue::new(DistortionDomain::Lsf, dv.value * lsf_gain(order))
}

pub fn distortion_s_to_v(ds: DistortionValue, order: usize) -> Result<DistortionValue> {
    expect_domain(&ds, DistortionDomain::Lsf)?;
    DistortionValue::new(DistortionDomain::Dlsf, ds.value / lsf_gain(order))
}

fn lsf_gain(order: usize) -> f64 {
    PI * PI * (order as f64 + 1.0) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Normal};

    fn lsf(v: &[f64]) -> LsfVector {
        LsfVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn differencing_examples() {
        let v = lsf_to_delta(&lsf(&[PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]));
        for d in v.values() {
            assert_relative_eq!(*d, 0.25, max_relative = 1e-15);
        }
        let v = lsf_to_delta(&lsf(&[PI / 3.0, 2.0 * PI / 3.0]));
        for d in v.values() {
            assert_relative_eq!(*d, 1.0 / 3.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn sphere_lift_examples() {
        let x = delta_to_srdlsf(&DeltaLsf::new(vec![0.25; 3]).unwrap());
        assert_eq!(x.values(), &[0.5; 4]);
        let x = delta_to_srdlsf(&DeltaLsf::new(vec![0.5]).unwrap());
        assert_relative_eq!(x.values()[0], 0.5f64.sqrt());
        assert_relative_eq!(x.values()[1], 0.5f64.sqrt());

        let s = srdlsf_to_lsf(&SphereVector::new(vec![0.5; 4]).unwrap()).unwrap();
        for (a, b) in s.values().iter().zip([PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn zero_residual_is_rejected() {
        let x = SphereVector::new(vec![0.6, 0.8, 0.0]).unwrap();
        assert!(matches!(srdlsf_to_delta(&x), Err(Error::Domain(_))));
    }

    #[test]
    fn sphere_vector_validation() {
        assert!(SphereVector::new(vec![1.0]).is_err());
        assert!(SphereVector::new(vec![-0.6, 0.8]).is_err());
        assert!(SphereVector::new(vec![0.6, 0.81]).is_err());
        assert_eq!(
            SphereVector::from_direction(&[-3.0, 4.0]).unwrap().values(),
            &[0.6, 0.8]
        );
    }

    #[test]
    fn jacobian_examples_and_finite_differences() {
        assert_eq!(
            jacobian_diag(&DeltaLsf::new(vec![0.25, 0.25]).unwrap()),
            vec![1.0, 1.0]
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = DeltaLsf::new((0..5).map(|_| rng.random_range(0.01..0.19)).collect()).unwrap();
            let jac = jacobian_diag(&v);
            let h = 1e-6;
            for (i, d) in v.values().iter().enumerate() {
                let x = d.sqrt();
                let fd = ((x + h).powi(2) - (x - h).powi(2)) / (2.0 * h);
                assert!((fd - jac[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn distortion_examples() {
        let zero = DistortionValue::new(DistortionDomain::Srdlsf, 0.0).unwrap();
        assert_eq!(distortion_x_to_v(zero, 0.5, 2).unwrap().value, 0.0);
        let dx = DistortionValue::new(DistortionDomain::Srdlsf, 0.01).unwrap();
        assert_relative_eq!(distortion_x_to_v(dx, 0.5, 2).unwrap().value, 0.01);
        assert!(distortion_x_to_v(dx, 1.0, 2).is_err());
        assert!(distortion_x_to_v(dx, 0.0, 2).is_err());
        assert!(distortion_v_to_s(dx, 2).is_err());

        let dv = DistortionValue::new(DistortionDomain::Dlsf, 0.3).unwrap();
        assert_relative_eq!(distortion_v_to_s(dv, 1).unwrap().value, PI * PI * 0.3);
        let zero_v = DistortionValue::new(DistortionDomain::Dlsf, 0.0).unwrap();
        assert_eq!(distortion_v_to_s(zero_v, 16).unwrap().value, 0.0);
        assert!(DistortionValue::new(DistortionDomain::Lsf, -1.0).is_err());
    }

    #[test]
    fn x_to_v_is_linear() {
        for (dx, m) in [(0.002, 0.3), (0.5, 0.9), (3.0, 0.01)] {
            let base = distortion_x_to_v(
                DistortionValue::new(DistortionDomain::Srdlsf, dx).unwrap(),
                m,
                16,
            )
            .unwrap();
            let scaled_d = distortion_x_to_v(
                DistortionValue::new(DistortionDomain::Srdlsf, 3.0 * dx).unwrap(),
                m,
                16,
            )
            .unwrap();
            let scaled_m = distortion_x_to_v(
                DistortionValue::new(DistortionDomain::Srdlsf, dx).unwrap(),
                m / 2.0,
                16,
            )
            .unwrap();
            assert_relative_eq!(scaled_d.value, 3.0 * base.value, max_relative = 1e-14);
            assert_relative_eq!(scaled_m.value, base.value / 2.0, max_relative = 1e-14);
        }
    }

    /// White-noise simulation of both conversions at a smaller sample size
    /// than the acceptance run.
    #[test]
    fn white_noise_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 6;
        let alpha = [3.0, 2.0, 4.0, 2.5, 3.5, 2.0, 5.0];
        let gammas: Vec<Gamma<f64>> = alpha.iter().map(|a| Gamma::new(*a, 1.0).unwrap()).collect();
        let sigma = 1e-3;
        let noise = Normal::new(0.0, sigma).unwrap();
        let n = 100_000;
        let (mut dv_acc, mut sum_v) = (0.0, 0.0);
        let mut ds_acc = 0.0;
        for _ in 0..n {
            let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut rng)).collect();
            let total: f64 = g.iter().sum();
            let v: Vec<f64> = g[..k].iter().map(|x| x / total).collect();
            sum_v += v.iter().sum::<f64>();
            for vk in &v {
                let x = vk.sqrt() + noise.sample(&mut rng);
                dv_acc += (x * x - vk).powi(2);
            }
            let mut cum = 0.0;
            for _ in 0..k {
                cum += noise.sample(&mut rng);
                ds_acc += (PI * cum).powi(2);
            }
        }
        let dx = DistortionValue::new(DistortionDomain::Srdlsf, k as f64 * sigma * sigma).unwrap();
        let predicted = distortion_x_to_v(dx, sum_v / n as f64, k).unwrap().value;
        assert!(((dv_acc / n as f64) / predicted - 1.0).abs() < 0.05);

        let dv = DistortionValue::new(DistortionDomain::Dlsf, k as f64 * sigma * sigma).unwrap();
        let predicted = distortion_v_to_s(dv, k).unwrap().value;
        assert!(((ds_acc / n as f64) / predicted - 1.0).abs() < 0.02);
    }

    fn arb_lsf(k: usize) -> impl Strategy<Value = LsfVector> {
        prop::collection::vec(0.01f64..1.0, k + 1).prop_map(|w| {
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            let vals = w[..w.len() - 1]
                .iter()
                .map(|x| {
                    acc += x / total;
                    PI * acc
                })
                .collect();
            LsfVector::new(vals).unwrap()
        })
    }

    proptest! {
        #[test]
        fn full_chain_roundtrip(s in arb_lsf(16)) {
            let x = lsf_to_srdlsf(&s);
            let norm2: f64 = x.values().iter().map(|c| c * c).sum();
            prop_assert!((norm2 - 1.0).abs() < UNIT_NORM_TOL);
            prop_assert!(x.values().iter().all(|c| *c >= 0.0));
            let back = srdlsf_to_lsf(&x).unwrap();
            for (a, b) in s.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn distortion_round_trips(d in 0.0f64..10.0, m in 0.01f64..0.99, k in 1usize..20) {
            let dx = DistortionValue::new(DistortionDomain::Srdlsf, d).unwrap();
            let dv = distortion_x_to_v(dx, m, k).unwrap();
            let ds = distortion_v_to_s(dv, k).unwrap();
            let back = distortion_v_to_x(distortion_s_to_v(ds, k).unwrap(), m, k).unwrap();
            prop_assert!((back.value - d).abs() <= 1e-12 * (1.0 + d));
        }
    }
}
