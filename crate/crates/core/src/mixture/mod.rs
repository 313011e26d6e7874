//! Expectation-maximization for finite mixtures.
//!
//! The E-step, log-likelihood bookkeeping and convergence control are shared
//! by the vMF mixture and the Gaussian and Dirichlet baselines; each family
//! supplies its component log-densities and its M-step.

pub mod kmeans;
pub mod vmm;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

pub use vmm::{
    e_step, fit_vmm, fit_vmm_from, kappa_approx, kappa_ml_oracle, m_step, KappaRule, VmfMixture,
};

/// Weight below which a component counts as empty and is re-seeded.
pub const MIN_WEIGHT: f64 = 1e-8;

/// A mixture whose component log-densities can be evaluated row by row.
pub trait MixtureDensity: Clone + Send + Sync {
    fn weights(&self) -> &[f64];

    /// Length of one data row in the family's native representation.
    fn row_len(&self) -> usize;

    /// Writes `ln f_i(x)` for every component into `out`.
    fn component_log_densities(&self, x: &[f64], out: &mut [f64]);

    fn n_components(&self) -> usize {
        self.weights().len()
    }

    /// `ln f_i(x_n)` for every sample and component, row-major `N × I`.
    ///
    /// Families with a cheaper batched evaluation override this.
    fn log_density_table(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let k = self.n_components();
        let mut table = vec![0.0; data.len() * k];
        table
            .par_chunks_mut(k)
            .zip(data.par_iter())
            .for_each(|(out, x)| self.component_log_densities(x, out));
        table
    }

    /// `ln sum_i pi_i f_i(x)`.
    fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.n_components()];
        self.component_log_densities(x, &mut buf);
        buf.iter_mut()
            .zip(self.weights())
            .for_each(|(l, w)| *l += w.ln());
        log_sum_exp(&buf)
    }
}

/// Posterior component probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n_components: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_components = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_components);
        for row in rows {
            if row.len() != n_components {
                return Err(Error::Dimension {
                    expected: n_components,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Responsibilities { n_components, data })
    }

    /// Wraps a row-major `N × n_components` table.
    pub(crate) fn from_flat(n_components: usize, data: Vec<f64>) -> Self {
        debug_assert!(n_components > 0 && data.len().is_multiple_of(n_components));
        Responsibilities { n_components, data }
    }

    /// Row-major slice holding the rows in `range`.
    pub(crate) fn block(&self, range: std::ops::Range<usize>) -> &[f64] {
        &self.data[range.start * self.n_components..range.end * self.n_components]
    }

    pub fn n_samples(&self) -> usize {
        self.data.len().checked_div(self.n_components).unwrap_or(0)
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_components..(n + 1) * self.n_components]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_components)
    }

    /// Column sums `N_i`.
    pub fn totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.n_components];
        for row in self.rows() {
            t.iter_mut().zip(row).for_each(|(a, r)| *a += r);
        }
        t
    }
}

/// Computes responsibilities and the mean log-likelihood of `model`.
pub fn responsibilities<M: MixtureDensity>(
    data: &[Vec<f64>],
    model: &M,
) -> Result<(Responsibilities, f64)> {
    let k = model.n_components();
    let log_w: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    let mut resp = model.log_density_table(data);
    let mut row_ll = vec![0.0; data.len()];
    resp.par_chunks_mut(k)
        .zip(row_ll.par_iter_mut())
        .for_each(|(out, ll)| {
            out.iter_mut().zip(&log_w).for_each(|(l, w)| *l += w);
            let total = log_sum_exp(out);
            *ll = total;
            if total.is_finite() {
                out.iter_mut().for_each(|l| *l = (*l - total).exp());
            }
        });
    if let Some(index) = row_ll.iter().position(|l| !l.is_finite()) {
        return Err(Error::DegeneratePoint { index });
    }
    let mean_ll = row_ll.iter().sum::<f64>() / data.len() as f64;
    Ok((
        Responsibilities {
            n_components: k,
            data: resp,
        },
        mean_ll,
    ))
}

/// Mean log-likelihood of `data` under `model`.
pub fn mean_log_likelihood<M: MixtureDensity>(data: &[Vec<f64>], model: &M) -> f64 {
    let ll: Vec<f64> = data.par_iter().map(|x| model.log_pdf(x)).collect();
    ll.iter().sum::<f64>() / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// k-means (spherical for vMF) with the best of `restarts` runs kept.
    KMeans { restarts: usize },
    /// Distinct random samples as component centres.
    RandomPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub components: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitStrategy,
    pub kappa_rule: KappaRule,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            components: 1,
            tol: 1e-6,
            max_iter: 500,
            seed: 0,
            init: InitStrategy::KMeans { restarts: 10 },
            kappa_rule: KappaRule::Ambient,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmReport<M> {
    /// Mean log-likelihood of the initial model followed by one entry per iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_model: M,
    pub seed: u64,
    /// Set when the loop stopped on a numerical failure and kept the last good model.
    pub aborted: Option<String>,
}

impl<M> EmReport<M> {
    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_likelihood_trace
            .last()
            .expect("trace holds the initial value")
    }
}

/// Alternates E and M steps until the change in mean log-likelihood drops
/// below `tol` or `max_iter` iterations have run.
pub(crate) fn run_em<M, F>(
    data: &[Vec<f64>],
    init: M,
    opts: &EmOptions,
    mut m_step: F,
) -> Result<EmReport<M>>
where
    M: MixtureDensity,
    F: FnMut(&[Vec<f64>], &Responsibilities, &M) -> Result<M>,
{
    let (mut resp, mut ll) = responsibilities(data, &init)?;
    let mut model = init;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut aborted = None;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        let next = match m_step(data, &resp, &model) {
            Ok(m) => m,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        let (next_resp, next_ll) = match responsibilities(data, &next) {
            Ok(r) if r.1.is_finite() => r,
            Ok(_) => {
                aborted = Some("non-finite log-likelihood".into());
                break;
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        iterations = it;
        trace.push(next_ll);
        let delta = (next_ll - ll).abs();
        model = next;
        resp = next_resp;
        ll = next_ll;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    if let Some(reason) = &aborted {
        log::warn!("EM stopped early: {reason}");
    }
    Ok(EmReport {
        log_likelihood_trace: trace,
        iterations,
        converged,
        final_model: model,
        seed: opts.seed,
        aborted,
    })
}

/// Rows per block in batched density and moment computations; small enough
/// for a block and its temporaries to stay in cache.
pub(crate) const ROW_BLOCK: usize = 1024;

/// Copies rows into an `N × K` matrix.
pub(crate) fn data_matrix(data: &[Vec<f64>]) -> DMatrix<f64> {
    let k = data.first().map_or(0, Vec::len);
    DMatrix::from_fn(data.len(), k, |r, c| data[r][c])
}

/// `X^T R` for the rows of `data` and the responsibility table, i.e. the
/// responsibility-weighted row sums, one column per component.
pub(crate) fn weighted_sums(data: &[Vec<f64>], resp: &Responsibilities) -> DMatrix<f64> {
    let k = data.first().map_or(0, Vec::len);
    let m = resp.n_components();
    chunked_reduce(
        data.len(),
        ROW_BLOCK,
        || DMatrix::zeros(k, m),
        |range, acc| {
            let x = data_matrix(&data[range.clone()]);
            let w = DMatrix::from_row_slice(range.len(), m, resp.block(range));
            acc.gemm(1.0, &x.transpose(), &w, 1.0);
        },
        |a, b| *a += b,
    )
}

/// Fixed-size chunked reduction whose result does not depend on the thread count.
pub(crate) fn chunked_reduce<T, I, F, G>(n: usize, chunk: usize, init: I, fold: F, merge: G) -> T
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(std::ops::Range<usize>, &mut T) + Sync,
    G: Fn(&mut T, T),
{
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let partials: Vec<T> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = init();
            fold(s..(s + chunk).min(n), &mut acc);
            acc
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}

/// Draws a component index from `weights`.
pub(crate) fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

pub(crate) fn validate_weights(weights: &[f64], n_components: usize) -> Result<()> {
    if weights.is_empty() || weights.len() != n_components {
        return Err(Error::Domain(format!(
            "{} weights for {n_components} components",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("mixture weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("mixture weights sum to {total}")));
    }
    Ok(())
}

pub(crate) fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}
