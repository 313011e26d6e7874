//! Constrained-entropy high-rate distortion-rate analysis of mixture models.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{dirichlet_component_entropy, dmm_mean_sum_v, gmm_component_entropy};
use crate::error::{Error, Result};
use crate::mixture::{validate_weights, MixtureDensity, VmfMixture};
use crate::model::{Family, FittedModel, Mixture};
use crate::special::ln_gamma;
use crate::transforms::{
    distortion_s_to_v, distortion_v_to_s, distortion_v_to_x, distortion_x_to_v, DistortionDomain,
    DistortionValue,
};
use crate::vmf::{component_entropy_corrected, component_entropy_paper};

/// Samples used when the ΔLSF mean sum of a vMF model has to be estimated.
const MEAN_SUM_SAMPLES: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    Nats,
    Bits,
}

impl RateUnit {
    pub fn to_nats(self, rate: f64) -> f64 {
        match self {
            RateUnit::Nats => rate,
            RateUnit::Bits => rate * std::f64::consts::LN_2,
        }
    }

    pub fn from_nats(self, rate: f64) -> f64 {
        match self {
            RateUnit::Nats => rate,
            RateUnit::Bits => rate / std::f64::consts::LN_2,
        }
    }
}

/// Choice of the quantizer constant `C(r, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CMode {
    /// `C = 1`; model comparisons do not depend on it.
    Unity,
    /// Sphere lower bound `Γ(K/2+1)^{r/K} / ((K+r) π^{r/2})`.
    SphereBound,
    /// Entropy-coded scalar Gaussian constant `(2πe)^{-r/2}`.
    ZadorGaussian,
}

impl FromStr for CMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unity" => Ok(CMode::Unity),
            "sphere_bound" => Ok(CMode::SphereBound),
            "zador_gaussian" => Ok(CMode::ZadorGaussian),
            other => Err(Error::Config(format!("unknown C mode `{other}`"))),
        }
    }
}

/// Which closed form supplies vMF component entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `-ln c_d(λ) - λ`, treating `E[μᵀx]` as one.
    UnitMean,
    /// `-ln c_d(λ) - λ A_d(λ)`, the exact differential entropy.
    Corrected,
}

impl FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_mean" => Ok(EntropyMode::UnitMean),
            "corrected" => Ok(EntropyMode::Corrected),
            other => Err(Error::Config(format!("unknown entropy mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Unit used for reported rates; computation is always in nats.
    pub rate_unit: RateUnit,
    /// Distortion exponent `r` (2 for mean squared error).
    pub r_exponent: f64,
    pub c_mode: CMode,
    pub entropy_mode: EntropyMode,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            rate_unit: RateUnit::Bits,
            r_exponent: 2.0,
            c_mode: CMode::Unity,
            entropy_mode: EntropyMode::UnitMean,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_exponent > 0.0 && self.r_exponent.is_finite()) {
            return Err(Error::Config(format!(
                "r must be positive, got {}",
                self.r_exponent
            )));
        }
        Ok(())
    }
}

/// Value of `C(r, K)` for `dof` degrees of freedom.
pub fn c_constant(mode: CMode, r: f64, dof: usize) -> f64 {
    let k = dof as f64;
    match mode {
        CMode::Unity => 1.0,
        CMode::SphereBound => {
            ((r / k) * ln_gamma(k / 2.0 + 1.0) - (r / 2.0) * std::f64::consts::PI.ln()).exp()
                / (k + r)
        }
        CMode::ZadorGaussian => (2.0 * std::f64::consts::PI * std::f64::consts::E).powf(-r / 2.0),
    }
}

/// Rate spent on the component index, `ln I` nats.
pub fn index_rate(components: usize) -> f64 {
    (components.max(1) as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    /// Per-component rates `R_i` in nats per vector; may be negative at low rates.
    pub per_component_rates: Vec<f64>,
    pub quantization_rate: f64,
    pub index_rate: f64,
    pub total_rate: f64,
    /// False when some `R_i < 0`, i.e. the high-rate assumption is violated.
    pub valid: bool,
}

fn check_inputs(entropies: &[f64], weights: &[f64]) -> Result<()> {
    validate_weights(weights, entropies.len())?;
    if entropies.iter().any(|h| !h.is_finite()) {
        return Err(Error::Domain("component entropies must be finite".into()));
    }
    Ok(())
}

fn mean_entropy(entropies: &[f64], weights: &[f64]) -> f64 {
    entropies.iter().zip(weights).map(|(h, w)| h * w).sum()
}

/// Optimal split of `total_rate` nats: `R_i = R_q + h_i - Σ π_j h_j` with `R_q = R - ln I`.
pub fn allocate_rates(
    entropies: &[f64],
    weights: &[f64],
    total_rate: f64,
) -> Result<BitAllocation> {
    check_inputs(entropies, weights)?;
    let r_a = index_rate(entropies.len());
    let r_q = total_rate - r_a;
    let mean_h = mean_entropy(entropies, weights);
    let rates: Vec<f64> = entropies.iter().map(|h| r_q + (h - mean_h)).collect();
    Ok(BitAllocation {
        valid: rates.iter().all(|r| *r >= 0.0),
        per_component_rates: rates,
        quantization_rate: r_q,
        index_rate: r_a,
        total_rate,
    })
}

/// Per-dimension distortion of one component quantized at `rate` nats: `C e^{-(r/K)(R_i - h_i)}`.
pub fn component_distortion(rate: f64, entropy: f64, dof: usize, cfg: &RateConfig) -> f64 {
    c_constant(cfg.c_mode, cfg.r_exponent, dof)
        * (-(cfg.r_exponent / dof as f64) * (rate - entropy)).exp()
}

/// Mixture distortion at `total_rate` nats: `C e^{-(r/K)(R - ln I - Σ π_i h_i)}`.
pub fn dr_point(
    total_rate: f64,
    entropies: &[f64],
    weights: &[f64],
    dof: usize,
    cfg: &RateConfig,
) -> Result<f64> {
    check_inputs(entropies, weights)?;
    cfg.validate()?;
    if dof == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    let exponent = total_rate - index_rate(entropies.len()) - mean_entropy(entropies, weights);
    Ok(component_distortion(exponent, 0.0, dof, cfg))
}

/// Component entropies of a fitted model in its native representation.
pub fn model_entropies(model: &FittedModel, mode: EntropyMode) -> Vec<f64> {
    match &model.mixture {
        Mixture::Vmm(m) => m
            .components()
            .iter()
            .map(|c| match mode {
                EntropyMode::UnitMean => component_entropy_paper(c),
                EntropyMode::Corrected => component_entropy_corrected(c),
            })
            .collect(),
        Mixture::Gmm(m) => m.components().iter().map(gmm_component_entropy).collect(),
        Mixture::Dmm(m) => m
            .components()
            .iter()
            .map(dirichlet_component_entropy)
            .collect(),
    }
}

/// `E[Σ_k v_k]` implied by a model: the stored training value when present,
/// otherwise a closed form (DMM, GMM) or a seeded Monte-Carlo estimate (VMM).
pub fn model_mean_sum_v(model: &FittedModel) -> Result<f64> {
    if let Some(v) = model.meta.mean_sum_v {
        return Ok(v);
    }
    let value = match &model.mixture {
        Mixture::Dmm(m) => dmm_mean_sum_v(m),
        Mixture::Gmm(m) => {
            // Σ_k v_k = s_K / π.
            let k = m.dim() - 1;
            m.weights()
                .iter()
                .zip(m.components())
                .map(|(w, c)| w * c.mean()[k])
                .sum::<f64>()
                / std::f64::consts::PI
        }
        Mixture::Vmm(m) => {
            // Σ_{k≤K} x_k² = 1 - x_{K+1}².
            let mut rng = ChaCha8Rng::seed_from_u64(model.meta.seed);
            let samples = m.sample(MEAN_SUM_SAMPLES, &mut rng);
            let last = m.dim() - 1;
            1.0 - samples.iter().map(|x| x[last] * x[last]).sum::<f64>() / samples.len() as f64
        }
    };
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::Domain(format!(
            "model implies a ΔLSF mean sum of {value}, outside (0, 1)"
        )));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrPoint {
    /// Total rate in the configured reporting unit.
    pub rate: f64,
    pub distortion_x: DistortionValue,
    pub distortion_v: DistortionValue,
    pub distortion_s: DistortionValue,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrCurve {
    pub family: Family,
    pub components: usize,
    pub rate_unit: RateUnit,
    pub points: Vec<DrPoint>,
}

impl DrCurve {
    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate).collect()
    }

    pub fn distortions(&self, domain: DistortionDomain) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match domain {
                DistortionDomain::Srdlsf => p.distortion_x.value,
                DistortionDomain::Dlsf => p.distortion_v.value,
                DistortionDomain::Lsf => p.distortion_s.value,
            })
            .collect()
    }
}

/// D-R curve of `model` over `rate_grid` (in `cfg.rate_unit` per vector).
///
/// The distortion is computed in the model's native domain (sphere for VMM,
/// ΔLSF for DMM, LSF for GMM) and mapped to the other two under the
/// white-noise assumption, so every family is available on the LSF axis.
pub fn dr_curve(
    model: &FittedModel,
    rate_grid: &[f64],
    cfg: &RateConfig,
    mean_sum_v: Option<f64>,
) -> Result<DrCurve> {
    cfg.validate()?;
    if rate_grid.is_empty() {
        return Err(Error::Config("rate grid is empty".into()));
    }
    if rate_grid.iter().any(|r| !r.is_finite()) || rate_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "rate grid must be finite and strictly increasing".into(),
        ));
    }
    let dof = model.order();
    let weights = model.weights();
    let entropies = model_entropies(model, cfg.entropy_mode);
    let family = model.family();
    let msv = match mean_sum_v {
        Some(v) => v,
        None => model_mean_sum_v(model)?,
    };
    let mut points = Vec::with_capacity(rate_grid.len());
    for &rate in rate_grid {
        let nats = cfg.rate_unit.to_nats(rate);
        let valid = allocate_rates(&entropies, weights, nats)?.valid;
        let d = dr_point(nats, &entropies, weights, dof, cfg)?;
        let (dx, dv, ds) = match family {
            Family::Vmm => {
                let dx = DistortionValue::new(DistortionDomain::Srdlsf, d)?;
                let dv = distortion_x_to_v(dx, msv, dof)?;
                (dx, dv, distortion_v_to_s(dv, dof)?)
            }
            Family::Dmm => {
                let dv = DistortionValue::new(DistortionDomain::Dlsf, d)?;
                (
                    distortion_v_to_x(dv, msv, dof)?,
                    dv,
                    distortion_v_to_s(dv, dof)?,
                )
            }
            Family::Gmm => {
                let ds = DistortionValue::new(DistortionDomain::Lsf, d)?;
                let dv = distortion_s_to_v(ds, dof)?;
                (distortion_v_to_x(dv, msv, dof)?, dv, ds)
            }
        };
        points.push(DrPoint {
            rate,
            distortion_x: dx,
            distortion_v: dv,
            distortion_s: ds,
            valid,
        });
    }
    Ok(DrCurve {
        family,
        components: model.n_components(),
        rate_unit: cfg.rate_unit,
        points,
    })
}

/// Evenly spaced grid `start, start + step, …` up to and including `stop`.
pub fn rate_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!(
            "invalid rate range {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

pub const CSV_HEADER: &str = "rate_bits,family,I,D_x,D_v,D_s,valid";

/// Formats with twelve significant digits.
pub fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// CSV rows for the given curves (rates converted to bits).
pub fn curves_to_csv(curves: &[DrCurve]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            let bits = RateUnit::Bits.from_nats(c.rate_unit.to_nats(p.rate));
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt12(bits),
                c.family,
                c.components,
                fmt12(p.distortion_x.value),
                fmt12(p.distortion_v.value),
                fmt12(p.distortion_s.value),
                p.valid
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub rate_bits: f64,
    pub family: Family,
    pub components: usize,
    pub d_x: f64,
    pub d_v: f64,
    pub d_s: f64,
    pub valid: bool,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing D-R CSV header".into()));
    }
    let num = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("line {line}: bad number `{s}`")))
    };
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Parse(format!("line {line}: expected 7 fields")));
            }
            Ok(CsvRow {
                rate_bits: num(f[0], line)?,
                family: f[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line}: bad family")))?,
                components: f[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line}: bad component count")))?,
                d_x: num(f[3], line)?,
                d_v: num(f[4], line)?,
                d_s: num(f[5], line)?,
                valid: f[6]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line}: bad validity flag")))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `ln I + Σ π_i h_i` with exact component entropies.
    pub lhs: f64,
    /// Monte-Carlo estimate of the mixture entropy.
    pub rhs: f64,
    pub gap: f64,
    /// Standard error of `rhs` (and therefore of `gap`).
    pub std_error: f64,
    pub samples: usize,
}

/// Systematic loss of component-wise quantization: `ln I + Σ π_i h_i - h(mixture)`.
pub fn entropy_gap(model: &VmfMixture, samples: usize, seed: u64) -> Result<GapReport> {
    if samples < 2 {
        return Err(Error::Domain(
            "entropy gap needs at least two samples".into(),
        ));
    }
    let lhs = index_rate(model.n_components())
        + model
            .weights()
            .iter()
            .zip(model.components())
            .map(|(w, c)| w * component_entropy_corrected(c))
            .sum::<f64>();
    if model.n_components() == 1 {
        return Ok(GapReport {
            lhs,
            rhs: lhs,
            gap: 0.0,
            std_error: 0.0,
            samples,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = model.sample(samples, &mut rng);
    let ll: Vec<f64> = {
        use rayon::prelude::*;
        draws.par_iter().map(|x| model.log_pdf(x)).collect()
    };
    let n = ll.len() as f64;
    let mean = ll.iter().sum::<f64>() / n;
    let var = ll.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0);
    let rhs = -mean;
    Ok(GapReport {
        lhs,
        rhs,
        gap: lhs - rhs,
        std_error: (var / n).sqrt(),
        samples,
    })
}
