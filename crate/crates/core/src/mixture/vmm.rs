//! von Mises-Fisher mixture and its EM fit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, random_points, Geometry};
use super::{
    pick, responsibilities, run_em, weighted_sums, EmOptions, EmReport, InitStrategy,
    MixtureDensity, Responsibilities, MIN_WEIGHT,
};
use crate::error::{Error, Result};
use crate::vmf::{dot, log_norm_const, mean_resultant, VmfComponent, VmfSampler};

/// Largest mean resultant length fed to the concentration estimate.
pub const R_BAR_MAX: f64 = 1.0 - 1e-9;

/// Which dimension enters the closed-form concentration estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaRule {
    /// Ambient dimension `d = K + 1` of the unit vectors.
    Ambient,
    /// Sphere dimension `K = d - 1`.
    Sphere,
}

impl KappaRule {
    pub fn dim_term(self, d: usize) -> f64 {
        match self {
            KappaRule::Ambient => d as f64,
            KappaRule::Sphere => (d - 1) as f64,
        }
    }
}

/// `(r d - r^3) / (1 - r^2)` with `r` clamped to `[0, 1 - 1e-9]`.
pub fn kappa_approx(dim_term: f64, r_bar: f64) -> f64 {
    let r = r_bar.clamp(0.0, R_BAR_MAX);
    (r * dim_term - r * r * r) / (1.0 - r * r)
}

/// Maximum-likelihood concentration: solves `A_d(lambda) = r_bar` by bisection.
pub fn kappa_ml_oracle(d: usize, r_bar: f64) -> Result<f64> {
    if !(0.0..=R_BAR_MAX).contains(&r_bar) {
        return Err(Error::Domain(format!(
            "r_bar must lie in [0, 1-1e-9], got {r_bar}"
        )));
    }
    if r_bar == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while mean_resultant(d, hi)? < r_bar {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mean_resultant(d, mid)? < r_bar {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Weighted mixture of vMF components sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfMixture {
    weights: Vec<f64>,
    components: Vec<VmfComponent>,
    log_norms: Vec<f64>,
}

impl VmfMixture {
    pub fn new(weights: Vec<f64>, components: Vec<VmfComponent>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::Domain(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}")));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: c.dim(),
            });
        }
        let log_norms = components
            .iter()
            .map(VmfComponent::log_norm_const)
            .collect();
        Ok(VmfMixture {
            weights,
            components,
            log_norms,
        })
    }

    /// Normalizes the weights before validating.
    pub fn from_unnormalized(weights: Vec<f64>, components: Vec<VmfComponent>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        VmfMixture::new(weights.iter().map(|w| w / total).collect(), components)
    }

    pub fn components(&self) -> &[VmfComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Draws `n` samples, choosing each component by weight.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let samplers: Vec<VmfSampler> = self.components.iter().map(VmfSampler::new).collect();
        (0..n)
            .map(|_| samplers[pick(&self.weights, rng)].sample(rng))
            .collect()
    }
}

impl MixtureDensity for VmfMixture {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn row_len(&self) -> usize {
        self.dim()
    }

    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), ln_c) in out.iter_mut().zip(&self.components).zip(&self.log_norms) {
            *o = ln_c + c.lambda * dot(&c.mu, x);
        }
    }
}

/// Posterior responsibilities under `model`.
pub fn e_step(data: &[Vec<f64>], model: &VmfMixture) -> Result<Responsibilities> {
    check_rows(data, model.dim())?;
    Ok(responsibilities(data, model)?.0)
}

struct Stats {
    totals: Vec<f64>,
    resultants: Vec<Vec<f64>>,
}

fn sufficient_stats(data: &[Vec<f64>], resp: &Responsibilities) -> Stats {
    let sums = weighted_sums(data, resp);
    Stats {
        totals: resp.totals(),
        resultants: sums
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect(),
    }
}

fn global_kappa(data: &[Vec<f64>], rule: KappaRule) -> f64 {
    let d = data[0].len();
    let mut sum = vec![0.0; d];
    for x in data {
        sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
    }
    let r = dot(&sum, &sum).sqrt() / data.len() as f64;
    kappa_approx(rule.dim_term(d), r)
}

/// Closed-form M-step: weights are column means of `resp`, directions are the
/// normalized weighted resultants and concentrations follow `rule`.
pub fn m_step(data: &[Vec<f64>], resp: &Responsibilities, rule: KappaRule) -> Result<VmfMixture> {
    Ok(m_step_with_rbar(data, resp, rule)?.0)
}

fn m_step_with_rbar(
    data: &[Vec<f64>],
    resp: &Responsibilities,
    rule: KappaRule,
) -> Result<(VmfMixture, Vec<f64>)> {
    if data.is_empty() || resp.n_samples() != data.len() {
        return Err(Error::Dimension {
            expected: data.len(),
            got: resp.n_samples(),
        });
    }
    let n = data.len() as f64;
    let d = data[0].len();
    let Stats { totals, resultants } = sufficient_stats(data, resp);

    let mut weights = Vec::with_capacity(totals.len());
    let mut components = Vec::with_capacity(totals.len());
    let mut r_bars = Vec::with_capacity(totals.len());
    let mut degenerate = Vec::new();
    for (i, (t, s)) in totals.iter().zip(&resultants).enumerate() {
        let len = dot(s, s).sqrt();
        let w = t / n;
        if w < MIN_WEIGHT || !(len > 0.0) {
            degenerate.push(i);
            weights.push(w.max(1.0 / n));
            components.push(None);
            r_bars.push(0.0);
            continue;
        }
        let r_bar = (len / t).min(R_BAR_MAX);
        let mu: Vec<f64> = s.iter().map(|v| v / len).collect();
        weights.push(w);
        r_bars.push(r_bar);
        components.push(Some(VmfComponent::new(
            mu,
            kappa_approx(rule.dim_term(d), r_bar),
        )?));
    }

    if !degenerate.is_empty() {
        // Re-seed at the samples the current model explains least well.
        let mut order: Vec<(usize, f64)> = resp
            .rows()
            .enumerate()
            .map(|(i, row)| (i, row.iter().copied().fold(0.0, f64::max)))
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let lambda = global_kappa(data, rule);
        for (slot, &i) in degenerate.iter().enumerate() {
            let x = &data[order[slot % order.len()].0];
            let norm = dot(x, x).sqrt();
            let mu = x.iter().map(|v| v / norm).collect();
            log::debug!("re-seeding empty vMF component {i}");
            components[i] = Some(VmfComponent::new(mu, lambda)?);
        }
    }

    let components = components.into_iter().map(|c| c.expect("filled")).collect();
    Ok((VmfMixture::from_unnormalized(weights, components)?, r_bars))
}

fn check_rows(data: &[Vec<f64>], d: usize) -> Result<()> {
    for x in data {
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
    }
    Ok(())
}

fn initial_model(data: &[Vec<f64>], opts: &EmOptions) -> Result<VmfMixture> {
    let k = opts.components;
    let d = data[0].len();
    let clustering = match opts.init {
        InitStrategy::KMeans { restarts } => {
            kmeans(Geometry::Spherical, data, k, restarts, opts.seed)?
        }
        InitStrategy::RandomPoints => random_points(Geometry::Spherical, data, k, opts.seed)?,
    };
    let global = global_kappa(data, opts.kappa_rule);
    let mut weights = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for (i, centroid) in clustering.centroids.iter().enumerate() {
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for n in clustering.members(i) {
            sum.iter_mut().zip(&data[n]).for_each(|(s, v)| *s += v);
            count += 1;
        }
        let len = dot(&sum, &sum).sqrt();
        let (mu, lambda) = if count > 1 && len > 0.0 {
            let mu = sum.iter().map(|v| v / len).collect();
            (
                mu,
                kappa_approx(opts.kappa_rule.dim_term(d), len / count as f64),
            )
        } else {
            let norm = dot(centroid, centroid).sqrt();
            (centroid.iter().map(|v| v / norm).collect(), global)
        };
        weights.push(count.max(1) as f64);
        components.push(VmfComponent::new(mu, lambda)?);
    }
    VmfMixture::from_unnormalized(weights, components)
}

fn validate_data(data: &[Vec<f64>], components: usize) -> Result<usize> {
    let need = 10 * components.max(1);
    if data.len() < need {
        return Err(Error::TooFewSamples {
            need,
            have: data.len(),
        });
    }
    let d = data[0].len();
    if d < 3 {
        return Err(Error::Domain(format!(
            "vMF data needs dimension >= 3, got {d}"
        )));
    }
    check_rows(data, d)?;
    if let Some(n) = data.iter().position(|x| !((dot(x, x) - 1.0).abs() < 1e-9)) {
        return Err(Error::Domain(format!("sample {n} is not a unit vector")));
    }
    Ok(d)
}

/// Fits a vMF mixture with `opts.components` components.
pub fn fit_vmm(data: &[Vec<f64>], opts: &EmOptions) -> Result<EmReport<VmfMixture>> {
    validate_data(data, opts.components)?;
    let init = initial_model(data, opts)?;
    fit_vmm_from(data, init, opts)
}

/// Runs EM from a given starting model.
///
/// The concentration update is the closed-form approximation; a component
/// keeps its previous concentration whenever the approximation would lower
/// its expected complete-data log-likelihood, so the likelihood trace stays
/// monotone.
pub fn fit_vmm_from(
    data: &[Vec<f64>],
    init: VmfMixture,
    opts: &EmOptions,
) -> Result<EmReport<VmfMixture>> {
    validate_data(data, init.n_components())?;
    check_rows(data, init.dim())?;
    let rule = opts.kappa_rule;
    run_em(data, init, opts, |data, resp, prev| {
        let (next, r_bars) = m_step_with_rbar(data, resp, rule)?;
        let d = next.dim();
        let mut components = next.components.clone();
        for ((c, old), r) in components.iter_mut().zip(prev.components()).zip(&r_bars) {
            if *r == 0.0 {
                continue;
            }
            let q = |lambda: f64| log_norm_const(d, lambda).map(|l| l + lambda * r);
            if q(old.lambda)? > q(c.lambda)? {
                c.lambda = old.lambda;
            }
        }
        VmfMixture::new(next.weights.clone(), components)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmf::sample_vmf;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn basis(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn angle(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn single_component_responsibilities_are_one() {
        let c = VmfComponent::new(basis(4, 0), 3.0).unwrap();
        let m = VmfMixture::new(vec![1.0], vec![c.clone()]).unwrap();
        let data = sample_vmf(&c, 30, &mut ChaCha8Rng::seed_from_u64(0));
        let r = e_step(&data, &m).unwrap();
        assert!(r.rows().all(|row| row == [1.0]));
    }

    #[test]
    fn identical_components_split_evenly() {
        let c = VmfComponent::new(basis(4, 1), 5.0).unwrap();
        let m = VmfMixture::new(vec![0.5, 0.5], vec![c.clone(), c.clone()]).unwrap();
        let data = sample_vmf(&c, 30, &mut ChaCha8Rng::seed_from_u64(0));
        for row in e_step(&data, &m).unwrap().rows() {
            assert!((row[0] - 0.5).abs() < 1e-15 && (row[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn concentrated_component_claims_its_mean() {
        let d = 5;
        let c1 = VmfComponent::new(basis(d, 0), 200.0).unwrap();
        let c2 = VmfComponent::new(unit(vec![1.0, 1.0, 1.0, 1.0, 1.0]), 1.0).unwrap();
        let m = VmfMixture::new(vec![0.5, 0.5], vec![c1.clone(), c2.clone()]).unwrap();
        let x = basis(d, 0);
        let r = e_step(std::slice::from_ref(&x), &m).unwrap();
        // direct density ratio
        let l1 = crate::vmf::log_pdf(&x, &c1).unwrap();
        let l2 = crate::vmf::log_pdf(&x, &c2).unwrap();
        let want = 1.0 / (1.0 + (l2 - l1).exp());
        assert_relative_eq!(r.row(0)[0], want, max_relative = 1e-14);
        assert!(r.row(0)[0] > 0.9999);
    }

    #[test]
    fn m_step_single_component_is_sample_mean_direction() {
        let c = VmfComponent::new(unit(vec![1.0, 2.0, 3.0]), 4.0).unwrap();
        let data = sample_vmf(&c, 500, &mut ChaCha8Rng::seed_from_u64(2));
        let resp = Responsibilities::from_rows(&vec![vec![1.0]; data.len()]).unwrap();
        let m = m_step(&data, &resp, KappaRule::Ambient).unwrap();
        let mut mean = vec![0.0; 3];
        for x in &data {
            mean.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        let mean = unit(mean);
        for (a, b) in m.components()[0].mu.iter().zip(&mean) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn zero_resultant_gives_zero_concentration() {
        assert_eq!(kappa_approx(17.0, 0.0), 0.0);
    }

    #[test]
    fn approximation_round_trips_through_mean_resultant() {
        for lambda in [1.0, 10.0, 100.0] {
            let r = mean_resultant(17, lambda).unwrap();
            let approx = kappa_approx(17.0, r);
            assert!(
                (approx - lambda).abs() / lambda <= 0.05,
                "{lambda}: {approx}"
            );
        }
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(kappa_ml_oracle(17, 0.0).unwrap(), 0.0);
        let lambda = kappa_ml_oracle(3, 1.0 / 2.0f64.tanh() - 0.5).unwrap();
        assert_relative_eq!(lambda, 2.0, max_relative = 1e-9);
        assert!((kappa_ml_oracle(3, 0.53731).unwrap() - 2.0).abs() < 1e-3);
        for d in [3, 17, 65] {
            for r in [1e-4, 0.1, 0.5, 0.9, 0.999, R_BAR_MAX] {
                let lambda = kappa_ml_oracle(d, r).unwrap();
                assert!(
                    (mean_resultant(d, lambda).unwrap() - r).abs() < 1e-9,
                    "d={d} r={r}"
                );
            }
        }
        assert!(kappa_ml_oracle(3, 1.0).is_err());
    }

    #[test]
    fn recovers_single_component() {
        let d = 17;
        let mu = unit((0..d).map(|i| 1.0 + (i as f64).sin()).collect());
        let truth = VmfComponent::new(mu.clone(), 50.0).unwrap();
        let data = sample_vmf(&truth, 50_000, &mut ChaCha8Rng::seed_from_u64(12));
        let opts = EmOptions {
            components: 1,
            seed: 3,
            ..Default::default()
        };
        let report = fit_vmm(&data, &opts).unwrap();
        let fitted = &report.final_model.components()[0];
        assert!(angle(&fitted.mu, &mu) < 0.02);
        assert!(
            (fitted.lambda - 50.0).abs() / 50.0 < 0.05,
            "lambda {}",
            fitted.lambda
        );
    }

    #[test]
    fn infinite_tolerance_runs_one_iteration() {
        let c = VmfComponent::new(basis(3, 2), 5.0).unwrap();
        let data = sample_vmf(&c, 200, &mut ChaCha8Rng::seed_from_u64(1));
        let opts = EmOptions {
            components: 2,
            tol: f64::INFINITY,
            ..Default::default()
        };
        let report = fit_vmm(&data, &opts).unwrap();
        assert_eq!(report.iterations, 1);
        assert_eq!(report.log_likelihood_trace.len(), 2);
        assert!(report.converged);
    }

    #[test]
    fn rejects_small_or_malformed_data() {
        let opts = EmOptions {
            components: 2,
            ..Default::default()
        };
        let data = vec![unit(vec![1.0, 1.0, 1.0]); 19];
        assert!(matches!(
            fit_vmm(&data, &opts),
            Err(Error::TooFewSamples { need: 20, have: 19 })
        ));
        let mut data = vec![unit(vec![1.0, 1.0, 1.0]); 30];
        data[4] = vec![1.0, 1.0, 1.0];
        assert!(matches!(fit_vmm(&data, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn monotone_trace_on_overlapping_mixture() {
        let d = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut data = Vec::new();
        for (i, lambda) in [(0usize, 8.0), (1, 3.0), (2, 20.0)] {
            let mu = unit((0..d).map(|j| if j == i { 2.0 } else { 0.5 }).collect());
            data.extend(sample_vmf(
                &VmfComponent::new(mu, lambda).unwrap(),
                3000,
                &mut rng,
            ));
        }
        for seed in 0..3 {
            let opts = EmOptions {
                components: 4,
                seed,
                init: InitStrategy::RandomPoints,
                ..Default::default()
            };
            let report = fit_vmm(&data, &opts).unwrap();
            for w in report.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}
