use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lpc::LpcVector;
use crate::error::{Error, Result};

const GRID_POINTS: usize = 512;
const GRID_REFINEMENTS: usize = 3;

/// Line spectral frequencies: strictly increasing angles in `(0, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LsfVector(Vec<f64>);

impl LsfVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty LSF vector".into()));
        }
        let mut prev = 0.0;
        for &s in &values {
            if !(s > prev) {
                return Err(Error::Domain(format!(
                    "LSF values must be strictly increasing in (0, pi): {values:?}"
                )));
            }
            prev = s;
        }
        if !(prev < PI) {
            return Err(Error::Domain(format!("LSF value {prev} not below pi")));
        }
        Ok(LsfVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LsfVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LsfVector::new(v)
    }
}

impl From<LsfVector> for Vec<f64> {
    fn from(v: LsfVector) -> Self {
        v.0
    }
}

/// Symmetric and antisymmetric polynomials with their trivial roots at
/// `z = +-1` divided out. Both returned polynomials are palindromic of even
/// degree.
fn split_polynomials(coeffs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = coeffs.len();
    // A(z) = 1 - sum a_j z^-j, padded to degree K+1
    let mut a = Vec::with_capacity(k + 2);
    a.push(1.0);
    a.extend(coeffs.iter().map(|c| -c));
    a.push(0.0);
    let p: Vec<f64> = (0..=k + 1).map(|i| a[i] + a[k + 1 - i]).collect();
    let q: Vec<f64> = (0..=k + 1).map(|i| a[i] - a[k + 1 - i]).collect();

    if k.is_multiple_of(2) {
        (deflate(&p, 1, -1.0), deflate(&q, 1, 1.0))
    } else {
        (p, deflate(&q, 2, 1.0))
    }
}

/// Divides by `(1 - sign * z^-lag)`; drops the remainder, which is zero here.
fn deflate(poly: &[f64], lag: usize, sign: f64) -> Vec<f64> {
    let n = poly.len() - lag;
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = poly[i] + if i >= lag { sign * out[i - lag] } else { 0.0 };
    }
    out
}

/// Chebyshev coefficients of `e^{jM w} G(e^{jw})` as a polynomial in `cos w`.
fn chebyshev_form(g: &[f64]) -> Vec<f64> {
    let m = (g.len() - 1) / 2;
    let mut c = Vec::with_capacity(m + 1);
    c.push(g[m]);
    for k in 1..=m {
        c.push(2.0 * g[m - k]);
    }
    c
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

fn find_roots(cheb: &[f64], grid: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let f = |w: f64| clenshaw(cheb, w.cos());
    let mut w_prev = 0.0;
    let mut f_prev = clenshaw(cheb, 1.0);
    for i in 1..grid {
        let x = 1.0 - 2.0 * i as f64 / (grid - 1) as f64;
        let w = x.clamp(-1.0, 1.0).acos();
        let fx = clenshaw(cheb, x);
        if f_prev == 0.0 {
            roots.push(w_prev);
        } else if f_prev * fx < 0.0 {
            let (mut lo, mut hi) = (w_prev, w);
            let mut f_lo = f_prev;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (f_lo < 0.0) {
                    lo = mid;
                    f_lo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        w_prev = w;
        f_prev = fx;
    }
    roots
}

/// Converts a minimum-phase predictor to line spectral frequencies.
pub fn lpc_to_lsf(lpc: &LpcVector) -> Result<LsfVector> {
    let k = lpc.order();
    if k == 0 {
        return Err(Error::Conversion("empty predictor".into()));
    }
    if lpc.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Conversion("non-finite predictor coefficient".into()));
    }
    let (p, q) = split_polynomials(&lpc.coeffs);
    let (cp, cq) = (chebyshev_form(&p), chebyshev_form(&q));
    let (need_p, need_q) = (cp.len() - 1, cq.len() - 1);

    let mut grid = GRID_POINTS;
    for _ in 0..=GRID_REFINEMENTS {
        let rp = find_roots(&cp, grid);
        let rq = find_roots(&cq, grid);
        if rp.len() == need_p && rq.len() == need_q {
            let mut all = Vec::with_capacity(k);
            for i in 0..need_p {
                all.push(rp[i]);
                if i < need_q {
                    all.push(rq[i]);
                }
            }
            if all.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Conversion(
                    "P/Q roots do not interleave; predictor is not minimum phase".into(),
                ));
            }
            return LsfVector::new(all).map_err(|e| Error::Conversion(e.to_string()));
        }
        grid *= 8;
    }
    Err(Error::Conversion(format!(
        "expected {need_p}+{need_q} unit-circle roots; predictor is not minimum phase"
    )))
}

fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Rebuilds the predictor from its LSFs. The gain is not recoverable and is set to 1.
pub fn lsf_to_lpc(lsf: &LsfVector) -> Result<LpcVector> {
    let k = lsf.order();
    let mut p = vec![1.0];
    let mut q = vec![1.0];
    for (i, &w) in lsf.values().iter().enumerate() {
        let factor = [1.0, -2.0 * w.cos(), 1.0];
        if i % 2 == 0 {
            p = multiply(&p, &factor);
        } else {
            q = multiply(&q, &factor);
        }
    }
    if k.is_multiple_of(2) {
        p = multiply(&p, &[1.0, 1.0]);
        q = multiply(&q, &[1.0, -1.0]);
    } else {
        q = multiply(&q, &[1.0, 0.0, -1.0]);
    }
    let coeffs = (1..=k).map(|i| -0.5 * (p[i] + q[i])).collect();
    Ok(LpcVector { coeffs, gain: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lpc::lpc_from_reflection;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sign changes of `e^{j(K+1)w/2} P(e^{jw})` and the matching
    /// antisymmetric form, scanned on a dense grid in `w` without any
    /// deflation or Chebyshev transform.
    fn dense_grid_lsf(coeffs: &[f64], n: usize) -> Vec<f64> {
        let k = coeffs.len();
        let mut a = vec![1.0];
        a.extend(coeffs.iter().map(|c| -c));
        a.push(0.0);
        let half = (k + 1) as f64 / 2.0;
        let pr = |w: f64| -> f64 {
            (0..=k + 1)
                .map(|i| (a[i] + a[k + 1 - i]) * ((half - i as f64) * w).cos())
                .sum()
        };
        let qr = |w: f64| -> f64 {
            (0..=k + 1)
                .map(|i| (a[i] - a[k + 1 - i]) * ((half - i as f64) * w).sin())
                .sum()
        };
        let mut roots = Vec::new();
        for f in [&pr as &dyn Fn(f64) -> f64, &qr] {
            let mut prev = f(PI / n as f64);
            for i in 2..n {
                let w = PI * i as f64 / n as f64;
                let cur = f(w);
                if prev * cur < 0.0 {
                    roots.push(w - 0.5 * PI / n as f64);
                }
                prev = cur;
            }
        }
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        roots
    }

    fn random_stable(rng: &mut ChaCha8Rng, order: usize, kmax: f64) -> Vec<f64> {
        let refl: Vec<f64> = (0..order).map(|_| rng.random_range(-kmax..kmax)).collect();
        lpc_from_reflection(&refl).unwrap()
    }

    #[test]
    fn flat_spectrum_order_two() {
        let lsf = lpc_to_lsf(&LpcVector {
            coeffs: vec![0.0, 0.0],
            gain: 1.0,
        })
        .unwrap();
        let oracle = dense_grid_lsf(&[0.0, 0.0], 200_000);
        assert_eq!(oracle.len(), 2);
        for ((got, want), grid) in lsf
            .values()
            .iter()
            .zip([PI / 3.0, 2.0 * PI / 3.0])
            .zip(&oracle)
        {
            assert!((got - want).abs() < 1e-12);
            assert!((got - grid).abs() < 2.0 * PI / 200_000.0);
        }
        let back = lsf_to_lpc(&lsf).unwrap();
        assert!(back.coeffs.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn equally_spaced_lsf_is_flat() {
        for k in [2usize, 3, 10, 16, 17] {
            let lsf =
                LsfVector::new((1..=k).map(|i| i as f64 * PI / (k + 1) as f64).collect()).unwrap();
            let lpc = lsf_to_lpc(&lsf).unwrap();
            assert!(
                lpc.coeffs.iter().all(|a| a.abs() < 1e-12),
                "K={k}: {:?}",
                lpc.coeffs
            );
        }
    }

    #[test]
    fn agrees_with_dense_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for order in [2usize, 5, 10, 16] {
            let a = random_stable(&mut rng, order, 0.8);
            let lsf = lpc_to_lsf(&LpcVector {
                coeffs: a.clone(),
                gain: 1.0,
            })
            .unwrap();
            let oracle = dense_grid_lsf(&a, 100_000);
            assert_eq!(oracle.len(), order);
            for (g, o) in lsf.values().iter().zip(&oracle) {
                assert!((g - o).abs() < 2.0 * PI / 100_000.0);
            }
        }
    }

    #[test]
    fn roundtrip_random_stable_order16() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let a = random_stable(&mut rng, 16, 0.9);
            let lsf = lpc_to_lsf(&LpcVector {
                coeffs: a.clone(),
                gain: 1.0,
            })
            .unwrap();
            let back = lsf_to_lpc(&lsf).unwrap();
            for (x, y) in a.iter().zip(&back.coeffs) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 1e-8, "max roundtrip error {worst}");
    }

    #[test]
    fn unstable_predictor_is_rejected() {
        // A(z) = 1 - 2.5 z^-1 + z^-2 has roots off the unit disk interior
        let r = lpc_to_lsf(&LpcVector {
            coeffs: vec![2.5, -1.0],
            gain: 1.0,
        });
        assert!(matches!(r, Err(Error::Conversion(_))));
        let r = lpc_to_lsf(&LpcVector {
            coeffs: vec![0.0, 0.0, 1.5],
            gain: 1.0,
        });
        assert!(matches!(r, Err(Error::Conversion(_))));
    }

    #[test]
    fn validation() {
        assert!(LsfVector::new(vec![0.5, 0.4]).is_err());
        assert!(LsfVector::new(vec![0.0, 0.4]).is_err());
        assert!(LsfVector::new(vec![0.5, PI]).is_err());
        assert!(LsfVector::new(vec![0.5, f64::NAN]).is_err());
        assert!(LsfVector::new(vec![0.5, 3.0]).is_ok());
    }
}
