//! Dirichlet mixture fitted to completed ΔLSF vectors on the simplex.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::mixture::kmeans::{kmeans, random_points, Geometry};
use crate::mixture::{
    chunked_reduce, normalized, pick, run_em, validate_weights, EmOptions, EmReport, InitStrategy,
    MixtureDensity, Responsibilities, MIN_WEIGHT,
};
use crate::special::{digamma, inv_digamma, ln_gamma, trigamma};

/// Simplex entries are clamped to at least this value before taking logs.
pub const SIMPLEX_FLOOR: f64 = 1e-10;

/// Relative convergence tolerance of the per-component ML solve.
const ML_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 200;
const FIXED_POINT_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletComponent {
    alpha: Vec<f64>,
    ln_beta: f64,
}

impl DirichletComponent {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Domain(format!(
                "Dirichlet needs at least 2 parameters, got {}",
                alpha.len()
            )));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Domain(
                "Dirichlet parameters must be positive and finite".into(),
            ));
        }
        let ln_beta = ln_beta(&alpha);
        Ok(DirichletComponent { alpha, ln_beta })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Log density at a point of the simplex (all coordinates, summing to one).
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf_from_logs(x.iter().map(|v| v.ln()))
    }

    fn log_pdf_from_logs(&self, ln_x: impl Iterator<Item = f64>) -> f64 {
        let s: f64 = self
            .alpha
            .iter()
            .zip(ln_x)
            .map(|(a, l)| (a - 1.0) * l)
            .sum();
        s - self.ln_beta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let g: Vec<f64> = self
            .alpha
            .iter()
            .map(|a| Gamma::new(*a, 1.0).expect("positive shape").sample(rng))
            .collect();
        let total: f64 = g.iter().sum();
        g.into_iter().map(|v| v / total).collect()
    }
}

fn ln_beta(alpha: &[f64]) -> f64 {
    alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>() - ln_gamma(alpha.iter().sum())
}

/// `ln B(α) + (α₀ − d)ψ(α₀) − Σ(α_j − 1)ψ(α_j)`.
pub fn dirichlet_component_entropy(comp: &DirichletComponent) -> f64 {
    let a0 = comp.alpha0();
    let d = comp.dim() as f64;
    comp.ln_beta + (a0 - d) * digamma(a0)
        - comp
            .alpha
            .iter()
            .map(|a| (a - 1.0) * digamma(*a))
            .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMixture {
    weights: Vec<f64>,
    components: Vec<DirichletComponent>,
}

impl DirichletMixture {
    pub fn new(weights: Vec<f64>, components: Vec<DirichletComponent>) -> Result<Self> {
        validate_weights(&weights, components.len())?;
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: c.dim(),
            });
        }
        Ok(DirichletMixture {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DirichletComponent] {
        &self.components
    }

    /// Number of simplex coordinates, `K + 1`.
    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        LogDomain(self.clone()).log_pdf(&x.iter().map(|v| v.ln()).collect::<Vec<_>>())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| self.components[pick(&self.weights, rng)].sample(rng))
            .collect()
    }
}

/// Model-based `Σ_k E[v_k]` over the first `K` coordinates: `Σ_i π_i Σ_{k≤K} α_ik / α_i0`.
pub fn dmm_mean_sum_v(model: &DirichletMixture) -> f64 {
    model
        .weights
        .iter()
        .zip(&model.components)
        .map(|(w, c)| {
            let k = c.dim() - 1;
            w * c.alpha[..k].iter().sum::<f64>() / c.alpha0()
        })
        .sum()
}

/// The mixture evaluated on log-coordinates, so EM takes logarithms once.
#[derive(Debug, Clone)]
struct LogDomain(DirichletMixture);

impl MixtureDensity for LogDomain {
    fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    fn row_len(&self) -> usize {
        self.0.dim()
    }

    fn component_log_densities(&self, ln_x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.0.components) {
            *o = c.log_pdf_from_logs(ln_x.iter().copied());
        }
    }
}

/// Per-component weighted statistics: mean of `ln x`, mean and second moment of `x`.
struct Moments {
    mean_ln: Vec<f64>,
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
}

impl Moments {
    fn moment_match(&self) -> Vec<f64> {
        // α₀ from each coordinate's variance, combined geometrically.
        let mut acc = 0.0;
        let mut used = 0;
        for (m, sq) in self.mean.iter().zip(&self.mean_sq) {
            let var = sq - m * m;
            let est = m * (1.0 - m) / var - 1.0;
            if var > 0.0 && est.is_finite() && est > 0.0 {
                acc += est.ln();
                used += 1;
            }
        }
        let a0 = if used > 0 {
            (acc / used as f64).exp()
        } else {
            self.mean.len() as f64
        };
        self.mean.iter().map(|m| (a0 * m).max(1e-3)).collect()
    }
}

fn weighted_moments<W>(data: &[Vec<f64>], logs: &[Vec<f64>], w: W, total: f64) -> Moments
where
    W: Fn(usize) -> f64 + Sync,
{
    let d = data[0].len();
    let sums = chunked_reduce(
        data.len(),
        4096,
        || vec![0.0; 3 * d],
        |range, acc| {
            for n in range {
                let r = w(n);
                for j in 0..d {
                    let x = data[n][j];
                    acc[j] += r * logs[n][j];
                    acc[d + j] += r * x;
                    acc[2 * d + j] += r * x * x;
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    );
    Moments {
        mean_ln: sums[..d].iter().map(|v| v / total).collect(),
        mean: sums[d..2 * d].iter().map(|v| v / total).collect(),
        mean_sq: sums[2 * d..].iter().map(|v| v / total).collect(),
    }
}

/// Per-sample objective `ln Γ(α₀) − Σ ln Γ(α_j) + Σ (α_j − 1) s_j`.
fn objective(alpha: &[f64], mean_ln: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    ln_gamma(a0)
        + alpha
            .iter()
            .zip(mean_ln)
            .map(|(a, s)| (a - 1.0) * s - ln_gamma(*a))
            .sum::<f64>()
}

/// Newton iteration exploiting the diagonal-plus-rank-one Hessian; each step
/// is halved until it stays positive and does not decrease the objective.
fn newton_ml(start: &[f64], mean_ln: &[f64]) -> Option<Vec<f64>> {
    let mut alpha = start.to_vec();
    let mut f = objective(&alpha, mean_ln);
    if !f.is_finite() {
        return None;
    }
    for _ in 0..NEWTON_MAX_ITER {
        let a0: f64 = alpha.iter().sum();
        let psi0 = digamma(a0);
        let z = trigamma(a0);
        let g: Vec<f64> = alpha
            .iter()
            .zip(mean_ln)
            .map(|(a, s)| psi0 - digamma(*a) + s)
            .collect();
        let q: Vec<f64> = alpha.iter().map(|a| -trigamma(*a)).collect();
        let b = g.iter().zip(&q).map(|(g, q)| g / q).sum::<f64>()
            / (1.0 / z + q.iter().map(|q| 1.0 / q).sum::<f64>());
        let step: Vec<f64> = g.iter().zip(&q).map(|(g, q)| (g - b) / q).collect();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(&step)
                .map(|(a, s)| a - scale * s)
                .collect();
            if trial.iter().all(|a| *a > 0.0 && a.is_finite()) {
                let ft = objective(&trial, mean_ln);
                if ft.is_finite() && ft >= f - 1e-15 * f.abs() {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            scale *= 0.5;
        }
        let (trial, ft) = accepted?;
        let change = trial
            .iter()
            .zip(&alpha)
            .map(|(n, o)| ((n - o) / o).abs())
            .fold(0.0, f64::max);
        alpha = trial;
        f = ft;
        if change < ML_TOL {
            return Some(alpha);
        }
    }
    None
}

/// Fixed point `α_j = ψ⁻¹(ψ(α₀) + s_j)`.
fn fixed_point_ml(start: &[f64], mean_ln: &[f64]) -> Option<Vec<f64>> {
    let mut alpha = start.to_vec();
    for _ in 0..FIXED_POINT_MAX_ITER {
        let psi0 = digamma(alpha.iter().sum());
        let next: Vec<f64> = mean_ln.iter().map(|s| inv_digamma(psi0 + s)).collect();
        if next.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return None;
        }
        let change = next
            .iter()
            .zip(&alpha)
            .map(|(n, o)| ((n - o) / o).abs())
            .fold(0.0, f64::max);
        alpha = next;
        if change < ML_TOL {
            return Some(alpha);
        }
    }
    Some(alpha)
}

/// Maximum-likelihood Dirichlet parameters given weighted moments, warm-started at `start`.
fn dirichlet_ml(start: &[f64], moments: &Moments) -> Result<Vec<f64>> {
    if let Some(alpha) = newton_ml(start, &moments.mean_ln) {
        return Ok(alpha);
    }
    let init = moments.moment_match();
    log::debug!("Dirichlet Newton solve failed; retrying from moment-matched start");
    let candidate =
        newton_ml(&init, &moments.mean_ln).or_else(|| fixed_point_ml(&init, &moments.mean_ln));
    match candidate {
        // Never return something worse than the warm start.
        Some(a) if objective(&a, &moments.mean_ln) >= objective(start, &moments.mean_ln) => Ok(a),
        Some(_) => Ok(start.to_vec()),
        None => Err(Error::Domain(
            "Dirichlet maximum-likelihood solve diverged".into(),
        )),
    }
}

/// Clamps entries at the simplex floor and renormalizes each row.
fn prepare(data: &[Vec<f64>], components: usize) -> Result<Vec<Vec<f64>>> {
    let need = 10 * components.max(1);
    if data.len() < need {
        return Err(Error::TooFewSamples {
            need,
            have: data.len(),
        });
    }
    let d = data[0].len();
    if d < 2 {
        return Err(Error::Domain(format!(
            "simplex rows need at least 2 entries, got {d}"
        )));
    }
    data.iter()
        .enumerate()
        .map(|(n, x)| {
            if x.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: x.len(),
                });
            }
            let total: f64 = x.iter().sum();
            if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (total - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!(
                    "row {n} is not a point of the simplex"
                )));
            }
            let clamped: Vec<f64> = x.iter().map(|v| v.max(SIMPLEX_FLOOR)).collect();
            let total: f64 = clamped.iter().sum();
            Ok(clamped.into_iter().map(|v| v / total).collect())
        })
        .collect()
}

fn m_step(
    data: &[Vec<f64>],
    logs: &[Vec<f64>],
    resp: &Responsibilities,
    prev: &DirichletMixture,
    global: &[f64],
) -> Result<DirichletMixture> {
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(prev.components.len());
    let mut components = Vec::with_capacity(prev.components.len());
    for (i, t) in resp.totals().into_iter().enumerate() {
        if t / n < MIN_WEIGHT {
            log::debug!("re-seeding degenerate Dirichlet component {i}");
            weights.push((t / n).max(1.0 / n));
            components.push(DirichletComponent::new(global.to_vec())?);
            continue;
        }
        let moments = weighted_moments(data, logs, |r| resp.row(r)[i], t);
        let alpha = dirichlet_ml(&prev.components[i].alpha, &moments)?;
        weights.push(t / n);
        components.push(DirichletComponent::new(alpha)?);
    }
    DirichletMixture::new(normalized(weights), components)
}

/// Fits a Dirichlet mixture to rows of the `(K+1)`-simplex.
pub fn fit_dmm(data: &[Vec<f64>], opts: &EmOptions) -> Result<EmReport<DirichletMixture>> {
    let data = prepare(data, opts.components)?;
    let logs: Vec<Vec<f64>> = data
        .iter()
        .map(|x| x.iter().map(|v| v.ln()).collect())
        .collect();
    let n = data.len() as f64;
    let global_moments = weighted_moments(&data, &logs, |_| 1.0, n);
    let global = global_moments.moment_match();

    let clustering = match opts.init {
        InitStrategy::KMeans { restarts } => kmeans(
            Geometry::Euclidean,
            &data,
            opts.components,
            restarts,
            opts.seed,
        )?,
        InitStrategy::RandomPoints => {
            random_points(Geometry::Euclidean, &data, opts.components, opts.seed)?
        }
    };
    let mut weights = Vec::with_capacity(opts.components);
    let mut components = Vec::with_capacity(opts.components);
    for i in 0..opts.components {
        let members: Vec<usize> = clustering.members(i).collect();
        let alpha = if members.len() > 1 {
            let m = members.len() as f64;
            let in_cluster = |r: usize| if clustering.labels[r] == i { 1.0 } else { 0.0 };
            weighted_moments(&data, &logs, in_cluster, m).moment_match()
        } else {
            global.clone()
        };
        weights.push(members.len().max(1) as f64);
        components.push(DirichletComponent::new(alpha)?);
    }
    let init = LogDomain(DirichletMixture::new(normalized(weights), components)?);
    let report = run_em(&logs, init, opts, |_, resp, prev| {
        m_step(&data, &logs, resp, &prev.0, &global).map(LogDomain)
    })?;
    Ok(EmReport {
        log_likelihood_trace: report.log_likelihood_trace,
        iterations: report.iterations,
        converged: report.converged,
        final_model: report.final_model.0,
        seed: report.seed,
        aborted: report.aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(alpha: Vec<f64>) -> DirichletMixture {
        DirichletMixture::new(vec![1.0], vec![DirichletComponent::new(alpha).unwrap()]).unwrap()
    }

    #[test]
    fn uniform_entropies() {
        let c = DirichletComponent::new(vec![1.0, 1.0]).unwrap();
        assert!(dirichlet_component_entropy(&c).abs() < 1e-14);
        for d in [3usize, 5, 17] {
            let c = DirichletComponent::new(vec![1.0; d]).unwrap();
            assert_relative_eq!(
                dirichlet_component_entropy(&c),
                -ln_gamma(d as f64),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn beta_entropy_closed_form() {
        // Beta(2, 5): ln B − (α−1)ψ(α) − (β−1)ψ(β) + (α+β−2)ψ(α+β)
        let c = DirichletComponent::new(vec![2.0, 5.0]).unwrap();
        let want = (1.0f64 / 30.0).ln() - digamma(2.0) - 4.0 * digamma(5.0) + 5.0 * digamma(7.0);
        assert_relative_eq!(dirichlet_component_entropy(&c), want, epsilon = 1e-13);
    }

    #[test]
    fn mc_entropy_oracle() {
        let c = DirichletComponent::new(vec![3.0, 1.5, 6.0, 2.0, 4.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let mc = -(0..n).map(|_| c.log_pdf(&c.sample(&mut rng))).sum::<f64>() / n as f64;
        assert!((mc - dirichlet_component_entropy(&c)).abs() < 0.01, "{mc}");
    }

    #[test]
    fn mean_sum_examples() {
        assert_relative_eq!(
            dmm_mean_sum_v(&single(vec![1.0; 17])),
            16.0 / 17.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            dmm_mean_sum_v(&single(vec![2.0, 6.0])),
            0.25,
            epsilon = 1e-15
        );
        let m = single(vec![5.0, 3.0, 2.0, 8.0]);
        let data = m.sample(200_000, &mut ChaCha8Rng::seed_from_u64(8));
        let emp = data.iter().map(|x| x[..3].iter().sum::<f64>()).sum::<f64>() / data.len() as f64;
        assert!((emp - dmm_mean_sum_v(&m)).abs() / dmm_mean_sum_v(&m) < 0.01);
    }

    #[test]
    fn recovers_symmetric_dirichlet() {
        let truth = single(vec![2.0; 5]);
        let data = truth.sample(100_000, &mut ChaCha8Rng::seed_from_u64(3));
        let report = fit_dmm(&data, &EmOptions::default()).unwrap();
        for a in report.final_model.components()[0].alpha() {
            assert!((a - 2.0).abs() / 2.0 < 0.03, "{a}");
        }
    }

    #[test]
    fn recovers_beta() {
        let truth = single(vec![2.0, 5.0]);
        let data = truth.sample(100_000, &mut ChaCha8Rng::seed_from_u64(13));
        let report = fit_dmm(&data, &EmOptions::default()).unwrap();
        let alpha = report.final_model.components()[0].alpha();
        assert!((alpha[0] - 2.0).abs() / 2.0 < 0.03, "{alpha:?}");
        assert!((alpha[1] - 5.0).abs() / 5.0 < 0.03, "{alpha:?}");
    }

    #[test]
    fn ml_solvers_agree() {
        let m = single(vec![0.7, 2.5, 9.0]);
        let data = m.sample(50_000, &mut ChaCha8Rng::seed_from_u64(30));
        let logs: Vec<Vec<f64>> = data
            .iter()
            .map(|x| x.iter().map(|v| v.ln()).collect())
            .collect();
        let moments = weighted_moments(&data, &logs, |_| 1.0, data.len() as f64);
        let start = moments.moment_match();
        let newton = newton_ml(&start, &moments.mean_ln).unwrap();
        let fixed = fixed_point_ml(&start, &moments.mean_ln).unwrap();
        for (a, b) in newton.iter().zip(&fixed) {
            assert_relative_eq!(*a, *b, max_relative = 1e-6);
        }
    }

    #[test]
    fn mixture_monotone() {
        let a = DirichletComponent::new(vec![8.0, 2.0, 2.0]).unwrap();
        let b = DirichletComponent::new(vec![2.0, 2.0, 8.0]).unwrap();
        let truth = DirichletMixture::new(vec![0.4, 0.6], vec![a, b]).unwrap();
        let data = truth.sample(20_000, &mut ChaCha8Rng::seed_from_u64(2));
        for seed in 0..3 {
            let opts = EmOptions {
                components: 3,
                seed,
                init: InitStrategy::RandomPoints,
                ..Default::default()
            };
            let report = fit_dmm(&data, &opts).unwrap();
            for w in report.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn infinite_tolerance_runs_one_iteration() {
        let data = single(vec![2.0, 3.0, 4.0]).sample(300, &mut ChaCha8Rng::seed_from_u64(1));
        let opts = EmOptions {
            components: 2,
            tol: f64::INFINITY,
            ..Default::default()
        };
        assert_eq!(fit_dmm(&data, &opts).unwrap().iterations, 1);
    }

    #[test]
    fn rejects_off_simplex_rows() {
        let mut data = vec![vec![0.2, 0.3, 0.5]; 20];
        data[3] = vec![0.2, 0.3, 0.6];
        assert!(matches!(
            fit_dmm(&data, &EmOptions::default()),
            Err(Error::Domain(_))
        ));
        // zeros are clamped, not rejected
        let mut data = single(vec![2.0, 3.0, 4.0]).sample(100, &mut ChaCha8Rng::seed_from_u64(1));
        data[0] = vec![0.0, 0.5, 0.5];
        assert!(fit_dmm(&data, &EmOptions::default()).is_ok());
    }
}
