//! Full-covariance Gaussian mixture fitted to raw LSF vectors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::kmeans::{kmeans, random_points, Geometry};
use crate::mixture::{
    chunked_reduce, data_matrix, normalized, pick, run_em, validate_weights, weighted_sums,
    EmOptions, EmReport, InitStrategy, MixtureDensity, Responsibilities, MIN_WEIGHT, ROW_BLOCK,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal loading, as a fraction of the mean variance, applied after each M-step.
pub const COVARIANCE_RIDGE: f64 = 1e-8;

/// Gaussian with a symmetric positive-definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussComponent {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    /// Row-major lower Cholesky factor.
    chol: Vec<f64>,
    /// `L^{-T}`, so that `(x - mu)^T L^{-T}` whitens a row.
    whitener: DMatrix<f64>,
    log_det: f64,
}

impl GaussComponent {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if k == 0 || covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::Dimension {
                expected: k,
                got: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite Gaussian parameter".into()));
        }
        let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (&covariance - covariance.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Domain("covariance is not positive definite".into()));
        }
        let whitener = l
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?
            .transpose();
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                rows[i * k + j] = l[(i, j)];
            }
        }
        Ok(GaussComponent {
            mean,
            covariance,
            chol: rows,
            whitener,
            log_det,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let k = self.dim();
        let mut z = [0.0f64; 64];
        let mut heap;
        let z: &mut [f64] = if k <= 64 {
            &mut z[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        let mut maha = 0.0;
        for i in 0..k {
            let row = &self.chol[i * k..i * k + i];
            let acc: f64 = row.iter().zip(z.iter()).map(|(l, v)| l * v).sum();
            z[i] = (x[i] - self.mean[i] - acc) / self.chol[i * k + i];
            maha += z[i] * z[i];
        }
        -0.5 * (k as f64 * LN_2PI + self.log_det + maha)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.dim();
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        (0..k)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[i * k + j] * z[j]).sum::<f64>())
            .collect()
    }
}

/// `½ ln((2πe)^K det Σ)`.
pub fn gmm_component_entropy(comp: &GaussComponent) -> f64 {
    0.5 * (comp.dim() as f64 * (LN_2PI + 1.0) + comp.log_det)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussComponent>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussComponent>) -> Result<Self> {
        validate_weights(&weights, components.len())?;
        let k = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != k) {
            return Err(Error::Dimension {
                expected: k,
                got: c.dim(),
            });
        }
        Ok(GaussianMixture {
            weights,
            components,
        })
    }

    pub fn components(&self) -> &[GaussComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| self.components[pick(&self.weights, rng)].sample(rng))
            .collect()
    }
}

impl MixtureDensity for GaussianMixture {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn row_len(&self) -> usize {
        self.dim()
    }

    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.log_pdf(x);
        }
    }

    fn log_density_table(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let m = self.components.len();
        let k = self.dim();
        let mut table = vec![0.0; data.len() * m];
        table
            .par_chunks_mut(ROW_BLOCK * m)
            .zip(data.par_chunks(ROW_BLOCK))
            .for_each(|(out, rows)| {
                let x = data_matrix(rows);
                for (i, c) in self.components.iter().enumerate() {
                    let z = centred(&x, &c.mean, None) * &c.whitener;
                    let base = -0.5 * (k as f64 * LN_2PI + c.log_det);
                    let mut maha = vec![0.0; rows.len()];
                    for col in z.as_slice().chunks(rows.len()) {
                        maha.iter_mut().zip(col).for_each(|(a, v)| *a += v * v);
                    }
                    for (r, q) in maha.iter().enumerate() {
                        out[r * m + i] = base - 0.5 * q;
                    }
                }
            });
        table
    }
}

/// `(x - 1 mean^T)`, with row `r` further multiplied by `scale[r]` when given.
fn centred(x: &DMatrix<f64>, mean: &[f64], scale: Option<&[f64]>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut y = DMatrix::zeros(n, x.ncols());
    let columns = y.as_mut_slice().chunks_mut(n).zip(x.as_slice().chunks(n));
    for ((out, col), m) in columns.zip(mean) {
        match scale {
            Some(s) => out
                .iter_mut()
                .zip(col)
                .zip(s)
                .for_each(|((o, v), s)| *o = (v - m) * s),
            None => out.iter_mut().zip(col).for_each(|(o, v)| *o = v - m),
        }
    }
    y
}

/// Weighted means and (ridge-regularized) covariances of `data`, one per
/// responsibility column. Columns with a zero total yield `None`.
fn weighted_moments(
    data: &[Vec<f64>],
    resp: &Responsibilities,
) -> Vec<Option<(Vec<f64>, DMatrix<f64>)>> {
    let k = data[0].len();
    let m = resp.n_components();
    let n = data.len();
    let totals = resp.totals();
    let sums = weighted_sums(data, resp);
    let means: Vec<Vec<f64>> = (0..m)
        .map(|i| sums.column(i).iter().map(|s| s / totals[i]).collect())
        .collect();
    let scatters = chunked_reduce(
        n,
        ROW_BLOCK,
        || vec![DMatrix::zeros(k, k); m],
        |range, acc| {
            let x = data_matrix(&data[range.clone()]);
            let w = resp.block(range.clone());
            for (i, (scatter, mean)) in acc.iter_mut().zip(&means).enumerate() {
                if totals[i] <= 0.0 {
                    continue;
                }
                let root: Vec<f64> = w.iter().skip(i).step_by(m).map(|r| r.sqrt()).collect();
                let y = centred(&x, mean, Some(&root));
                scatter.gemm(1.0, &y.transpose(), &y, 1.0);
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    );
    scatters
        .into_iter()
        .zip(means)
        .zip(&totals)
        .map(|((scatter, mean), &total)| {
            if total <= 0.0 || !total.is_finite() {
                return None;
            }
            let mut cov = DMatrix::from_fn(k, k, |a, b| {
                let (a, b) = if a >= b { (a, b) } else { (b, a) };
                scatter[(a, b)] / total
            });
            let ridge = COVARIANCE_RIDGE * cov.trace() / k as f64;
            for i in 0..k {
                cov[(i, i)] += ridge;
            }
            Some((mean, cov))
        })
        .collect()
}

fn validate_data(data: &[Vec<f64>], components: usize) -> Result<usize> {
    let k = data.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(Error::TooFewSamples { need: 1, have: 0 });
    }
    let need = 10 * components.max(1) * k;
    if data.len() < need {
        return Err(Error::TooFewSamples {
            need,
            have: data.len(),
        });
    }
    for x in data {
        if x.len() != k {
            return Err(Error::Dimension {
                expected: k,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite sample".into()));
        }
    }
    Ok(k)
}

fn m_step(
    data: &[Vec<f64>],
    resp: &Responsibilities,
    global: &GaussComponent,
) -> Result<GaussianMixture> {
    let n = data.len() as f64;
    let totals = resp.totals();
    let moments = weighted_moments(data, resp);
    let mut weights = Vec::with_capacity(totals.len());
    let mut components = Vec::with_capacity(totals.len());
    let mut degenerate = Vec::new();
    for ((i, t), moment) in totals.iter().enumerate().zip(moments) {
        let fitted = match moment {
            Some((mean, cov)) if t / n >= MIN_WEIGHT => GaussComponent::new(mean, cov).ok(),
            _ => None,
        };
        match fitted {
            Some(c) => {
                weights.push(t / n);
                components.push(Some(c));
            }
            None => {
                degenerate.push(i);
                weights.push((t / n).max(1.0 / n));
                components.push(None);
            }
        }
    }
    if !degenerate.is_empty() {
        let mut order: Vec<(usize, f64)> = resp
            .rows()
            .enumerate()
            .map(|(i, row)| (i, row.iter().copied().fold(0.0, f64::max)))
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for (slot, &i) in degenerate.iter().enumerate() {
            log::debug!("re-seeding degenerate Gaussian component {i}");
            let x = data[order[slot % order.len()].0].clone();
            components[i] = Some(GaussComponent::new(x, global.covariance.clone())?);
        }
    }
    GaussianMixture::new(
        normalized(weights),
        components.into_iter().map(|c| c.expect("filled")).collect(),
    )
}

/// Fits a full-covariance Gaussian mixture with `opts.components` components.
pub fn fit_gmm(data: &[Vec<f64>], opts: &EmOptions) -> Result<EmReport<GaussianMixture>> {
    validate_data(data, opts.components)?;
    let ones = Responsibilities::from_flat(1, vec![1.0; data.len()]);
    let (mean, cov) = weighted_moments(data, &ones)
        .remove(0)
        .expect("nonempty data");
    let global = GaussComponent::new(mean, cov)?;

    let clustering = match opts.init {
        InitStrategy::KMeans { restarts } => kmeans(
            Geometry::Euclidean,
            data,
            opts.components,
            restarts,
            opts.seed,
        )?,
        InitStrategy::RandomPoints => {
            random_points(Geometry::Euclidean, data, opts.components, opts.seed)?
        }
    };
    let k = opts.components;
    let mut hard = vec![0.0; data.len() * k];
    let mut counts = vec![0usize; k];
    for (n, &label) in clustering.labels.iter().enumerate() {
        hard[n * k + label] = 1.0;
        counts[label] += 1;
    }
    let moments = weighted_moments(data, &Responsibilities::from_flat(k, hard));
    let mut weights = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for ((centroid, moment), &count) in clustering.centroids.iter().zip(moments).zip(&counts) {
        let comp = match moment {
            Some((mean, cov)) if count > data[0].len() => GaussComponent::new(mean, cov).ok(),
            _ => None,
        };
        let comp = match comp {
            Some(c) => c,
            None => GaussComponent::new(centroid.clone(), global.covariance.clone())?,
        };
        weights.push(count.max(1) as f64);
        components.push(comp);
    }
    let init = GaussianMixture::new(normalized(weights), components)?;
    run_em(data, init, opts, |data, resp, _| {
        m_step(data, resp, &global)
    })
}
