//! The operations behind each command-line subcommand.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::corpus::{collect_wavs, mean_sum_v, to_rows, to_simplex, to_sphere, LsfCorpus};
use super::manifest::RunManifest;
use super::settings::Settings;
use super::synth::{reference_vmm, sample_lsf_corpus, synth_speech};
use crate::baselines::{fit_dmm, fit_gmm};
use crate::error::{Error, Result};
use crate::frontend::{extract_lsf, read_wav, write_wav, AnalysisConfig, Audio, LsfVector};
use crate::mixture::{fit_vmm, EmOptions, EmReport};
use crate::model::{Family, FittedModel, Mixture, ModelMeta};
use crate::rate::{curves_to_csv, dr_curve, entropy_gap, rate_grid, DrCurve, DrPoint, GapReport};
use crate::transforms::{DistortionDomain, DistortionValue};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractSummary {
    pub files: usize,
    pub frames: usize,
    pub vectors: usize,
    pub skipped: usize,
    pub silent: usize,
}

/// Analyses every WAV file in `in_dir` (sorted by name) and writes one LSF corpus.
pub fn cmd_extract(
    in_dir: &Path,
    out: &Path,
    settings: &Settings,
    seed: u64,
) -> Result<ExtractSummary> {
    settings.validate()?;
    let files = collect_wavs(in_dir)?;
    if files.is_empty() {
        return Err(Error::Domain(format!(
            "no WAV files in {}",
            in_dir.display()
        )));
    }
    let results: Vec<(u32, crate::frontend::Extraction)> = files
        .par_iter()
        .map(|path| {
            let audio = read_wav(path)?;
            let config = AnalysisConfig {
                sample_rate_hz: audio.sample_rate,
                ..settings.analysis.clone()
            };
            match extract_lsf(&audio.samples, &config) {
                Ok(e) => Ok((audio.sample_rate, e)),
                Err(Error::SignalTooShort { .. }) => {
                    log::warn!(
                        "{} is shorter than one analysis window; skipped",
                        path.display()
                    );
                    Ok((audio.sample_rate, Default::default()))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let rate = results[0].0;
    if let Some((r, _)) = results.iter().find(|(r, _)| *r != rate) {
        return Err(Error::Format(format!(
            "mixed sample rates in corpus: {rate} and {r} Hz"
        )));
    }
    let mut summary = ExtractSummary {
        files: files.len(),
        frames: 0,
        vectors: 0,
        skipped: 0,
        silent: 0,
    };
    let mut vectors = Vec::new();
    for (_, e) in results {
        summary.frames += e.frames;
        summary.skipped += e.skipped;
        summary.silent += e.silent;
        vectors.extend(e.vectors);
    }
    summary.vectors = vectors.len();
    if vectors.is_empty() && summary.frames > summary.silent {
        return Err(Error::Domain("every analysis frame was unstable".into()));
    }
    if vectors.is_empty() {
        log::warn!("input is silent; the corpus is empty");
    }
    if summary.skipped > 0 {
        log::info!("skipped {} of {} frames", summary.skipped, summary.frames);
    }
    let corpus = LsfCorpus::new(settings.analysis.lpc_order, rate, vectors)?;
    corpus.save(out)?;
    let mut manifest = RunManifest::new("extract", seed, settings.snapshot());
    for f in &files {
        manifest.add_input(f)?;
    }
    manifest.add_output(out)?;
    manifest.write_beside(out)?;
    Ok(summary)
}

/// Fits one model family on LSF vectors, transforming them to the family's representation.
pub fn fit_family(family: Family, train: &[LsfVector], opts: &EmOptions) -> Result<FittedModel> {
    let msv = mean_sum_v(train);
    fn wrap<M>(report: EmReport<M>, msv: Option<f64>, f: impl FnOnce(M) -> Mixture) -> FittedModel {
        let meta = ModelMeta::from_report(&report, msv);
        FittedModel {
            mixture: f(report.final_model),
            meta,
        }
    }
    Ok(match family {
        Family::Vmm => wrap(fit_vmm(&to_sphere(train), opts)?, msv, Mixture::Vmm),
        Family::Gmm => wrap(fit_gmm(&to_rows(train), opts)?, msv, Mixture::Gmm),
        Family::Dmm => wrap(fit_dmm(&to_simplex(train), opts)?, msv, Mixture::Dmm),
    })
}

/// Held-out mean log-likelihood of `model` on LSF vectors, in the model's own representation.
pub fn heldout_log_likelihood(model: &FittedModel, vectors: &[LsfVector]) -> Option<f64> {
    use crate::mixture::mean_log_likelihood;
    if vectors.is_empty() {
        return None;
    }
    Some(match &model.mixture {
        Mixture::Vmm(m) => mean_log_likelihood(&to_sphere(vectors), m),
        Mixture::Gmm(m) => mean_log_likelihood(&to_rows(vectors), m),
        Mixture::Dmm(m) => {
            to_simplex(vectors)
                .iter()
                .map(|x| m.log_pdf(x))
                .sum::<f64>()
                / vectors.len() as f64
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub family: Family,
    pub components: usize,
    pub train_vectors: usize,
    pub test_vectors: usize,
    pub iterations: usize,
    pub train_loglik: f64,
    pub test_loglik: Option<f64>,
}

pub fn cmd_fit(
    lsf: &Path,
    family: Family,
    out: &Path,
    settings: &Settings,
    seed: u64,
) -> Result<FitSummary> {
    settings.validate()?;
    let corpus = LsfCorpus::load(lsf)?;
    let (train, test) = corpus.split(settings.train_fraction, seed);
    let opts = EmOptions {
        seed,
        ..settings.em.clone()
    };
    let model = fit_family(family, &train, &opts)?;
    model.save(out)?;
    let summary = FitSummary {
        family,
        components: model.n_components(),
        train_vectors: train.len(),
        test_vectors: test.len(),
        iterations: model.meta.iterations,
        train_loglik: model.meta.loglik,
        test_loglik: heldout_log_likelihood(&model, &test),
    };
    let mut manifest = RunManifest::new(&format!("fit {family}"), seed, settings.snapshot());
    manifest.add_input(lsf)?;
    manifest.add_output(out)?;
    manifest.write_beside(out)?;
    Ok(summary)
}

pub fn settings_grid(settings: &Settings) -> Result<Vec<f64>> {
    rate_grid(settings.rate_min, settings.rate_max, settings.rate_step)
}

pub fn cmd_drcurve(
    model_path: &Path,
    out: &Path,
    settings: &Settings,
    seed: u64,
) -> Result<DrCurve> {
    settings.validate()?;
    let model = FittedModel::load(model_path)?;
    let curve = dr_curve(&model, &settings_grid(settings)?, &settings.rate, None)?;
    write_text(out, &curves_to_csv(std::slice::from_ref(&curve)))?;
    let mut manifest = RunManifest::new("drcurve", seed, settings.snapshot());
    manifest.add_input(model_path)?;
    manifest.add_output(out)?;
    manifest.write_beside(out)?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRatio {
    pub numerator: String,
    pub denominator: String,
    /// Mean over the grid of the LSF-domain distortion ratio.
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub pairs: Vec<PairRatio>,
    #[serde(skip)]
    pub curves: Vec<DrCurve>,
}

impl Comparison {
    fn from_curves(labels: Vec<String>, curves: Vec<DrCurve>) -> Self {
        let mut pairs = Vec::new();
        for i in 0..curves.len() {
            for j in 0..curves.len() {
                if i == j {
                    continue;
                }
                let a = curves[i].distortions(DistortionDomain::Lsf);
                let b = curves[j].distortions(DistortionDomain::Lsf);
                let mean = a.iter().zip(&b).map(|(x, y)| x / y).sum::<f64>() / a.len() as f64;
                pairs.push(PairRatio {
                    numerator: labels[i].clone(),
                    denominator: labels[j].clone(),
                    mean_ratio: mean,
                });
            }
        }
        Comparison {
            labels,
            pairs,
            curves,
        }
    }

    /// Plain-text table of the pairwise mean distortion ratios.
    pub fn table(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = format!("{:width$}", "D_s ratio");
        for l in &self.labels {
            out.push_str(&format!("  {l:>width$}"));
        }
        out.push('\n');
        for a in &self.labels {
            out.push_str(&format!("{a:width$}"));
            for b in &self.labels {
                let v = if a == b {
                    1.0
                } else {
                    self.pairs
                        .iter()
                        .find(|p| &p.numerator == a && &p.denominator == b)
                        .map_or(f64::NAN, |p| p.mean_ratio)
                };
                out.push_str(&format!("  {v:>width$.4}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Compares stored models on a common grid.
pub fn cmd_compare_models(
    models: &[PathBuf],
    out: &Path,
    settings: &Settings,
    seed: u64,
) -> Result<Comparison> {
    settings.validate()?;
    if models.len() < 2 {
        return Err(Error::Config("compare needs at least two models".into()));
    }
    let loaded = models
        .iter()
        .map(|p| FittedModel::load(p))
        .collect::<Result<Vec<_>>>()?;
    let order = loaded[0].order();
    if let Some(m) = loaded.iter().find(|m| m.order() != order) {
        return Err(Error::Dimension {
            expected: order,
            got: m.order(),
        });
    }
    let grid = settings_grid(settings)?;
    let curves = loaded
        .iter()
        .map(|m| dr_curve(m, &grid, &settings.rate, None))
        .collect::<Result<Vec<_>>>()?;
    let labels = models
        .iter()
        .zip(&loaded)
        .map(|(p, m)| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            format!("{stem}:{}/{}", m.family(), m.n_components())
        })
        .collect();
    let cmp = Comparison::from_curves(labels, curves);
    write_text(out, &curves_to_csv(&cmp.curves))?;
    write_json(&sibling(out, ".summary.json"), &cmp)?;
    let mut manifest = RunManifest::new("compare", seed, settings.snapshot());
    for m in models {
        manifest.add_input(m)?;
    }
    manifest.add_output(out)?;
    manifest.write_beside(out)?;
    Ok(cmp)
}

/// What changes between comparison rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundVariation {
    /// Only the EM seed.
    Seed,
    /// EM seed and a bootstrap resample of the training set.
    SeedAndBootstrap,
}

/// Averages of `rounds` independent fit-and-curve runs per family.
pub fn compare_rounds(
    corpus: &LsfCorpus,
    families: &[Family],
    rounds: usize,
    variation: RoundVariation,
    settings: &Settings,
    seed: u64,
) -> Result<Vec<DrCurve>> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let (train, _) = corpus.split(settings.train_fraction, seed);
    let grid = settings_grid(settings)?;
    let per_round: Vec<Vec<DrCurve>> = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let round_seed = seed.wrapping_add(r as u64);
            let data: Vec<LsfVector> = match variation {
                RoundVariation::Seed => train.clone(),
                RoundVariation::SeedAndBootstrap => {
                    let mut rng = ChaCha8Rng::seed_from_u64(round_seed ^ 0x5eed_b007);
                    (0..train.len())
                        .map(|_| train[rng.random_range(0..train.len())].clone())
                        .collect()
                }
            };
            let opts = EmOptions {
                seed: round_seed,
                ..settings.em.clone()
            };
            families
                .iter()
                .map(|&f| {
                    let model = fit_family(f, &data, &opts)?;
                    dr_curve(&model, &grid, &settings.rate, None)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..families.len())
        .map(|fi| average_curves(per_round.iter().map(|r| &r[fi])))
        .collect())
}

fn average_curves<'a>(curves: impl Iterator<Item = &'a DrCurve>) -> DrCurve {
    let curves: Vec<&DrCurve> = curves.collect();
    let n = curves.len() as f64;
    let first = curves[0];
    let points = (0..first.points.len())
        .map(|i| {
            let mean =
                |f: fn(&DrPoint) -> f64| curves.iter().map(|c| f(&c.points[i])).sum::<f64>() / n;
            let value = |domain, f| DistortionValue {
                domain,
                value: mean(f),
            };
            DrPoint {
                rate: first.points[i].rate,
                distortion_x: value(DistortionDomain::Srdlsf, |p| p.distortion_x.value),
                distortion_v: value(DistortionDomain::Dlsf, |p| p.distortion_v.value),
                distortion_s: value(DistortionDomain::Lsf, |p| p.distortion_s.value),
                valid: curves.iter().all(|c| c.points[i].valid),
            }
        })
        .collect();
    DrCurve {
        family: first.family,
        components: first.components,
        rate_unit: first.rate_unit,
        points,
    }
}

/// Refits each family `rounds` times on an LSF corpus and compares the averaged curves.
pub fn cmd_compare_rounds(
    lsf: &Path,
    families: &[Family],
    rounds: usize,
    variation: RoundVariation,
    out: &Path,
    settings: &Settings,
    seed: u64,
) -> Result<Comparison> {
    settings.validate()?;
    if families.len() < 2 {
        return Err(Error::Config("compare needs at least two families".into()));
    }
    let corpus = LsfCorpus::load(lsf)?;
    let curves = compare_rounds(&corpus, families, rounds, variation, settings, seed)?;
    let labels = families
        .iter()
        .map(|f| format!("{f}/{}", settings.em.components))
        .collect();
    let cmp = Comparison::from_curves(labels, curves);
    write_text(out, &curves_to_csv(&cmp.curves))?;
    write_json(&sibling(out, ".summary.json"), &cmp)?;
    let mut config = settings.snapshot();
    config.insert("rounds".into(), rounds.to_string());
    config.insert(
        "bootstrap".into(),
        (variation == RoundVariation::SeedAndBootstrap).to_string(),
    );
    let mut manifest = RunManifest::new("compare", seed, config);
    manifest.add_input(lsf)?;
    manifest.add_output(out)?;
    manifest.write_beside(out)?;
    Ok(cmp)
}

pub fn cmd_gap(model_path: &Path, samples: usize, seed: u64) -> Result<GapReport> {
    let model = FittedModel::load(model_path)?;
    match &model.mixture {
        Mixture::Vmm(m) => entropy_gap(m, samples, seed),
        _ => Err(Error::Domain(format!(
            "the entropy gap is computed for vmm models, got {}",
            model.family()
        ))),
    }
}

/// Writes `files` synthetic speech recordings into `out_dir`.
pub fn cmd_synth_speech(
    out_dir: &Path,
    files: usize,
    seconds: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    if files == 0 || !(seconds > 0.0) || sample_rate == 0 {
        return Err(Error::Config(
            "synth needs files >= 1, seconds > 0 and a sample rate".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    (0..files)
        .map(|i| {
            let path = out_dir.join(format!("synth_{i:03}.wav"));
            let samples = synth_speech(seconds, sample_rate, seed.wrapping_add(i as u64));
            write_wav(
                &path,
                &Audio {
                    samples,
                    sample_rate,
                },
            )?;
            Ok(path)
        })
        .collect()
}

/// Writes an LSF corpus sampled from the reference vMF mixture.
pub fn cmd_synth_vmm(out: &Path, vectors: usize, order: usize, seed: u64) -> Result<usize> {
    let truth = reference_vmm(order, seed)?;
    let (lsf, _) = sample_lsf_corpus(&truth, vectors, seed.wrapping_add(1))?;
    LsfCorpus::new(order, 0, lsf)?.save(out)?;
    let mut config = std::collections::BTreeMap::new();
    config.insert("order".to_string(), order.to_string());
    config.insert("vectors".to_string(), vectors.to_string());
    let mut manifest = RunManifest::new("synth vmm", seed, config);
    manifest.add_output(out)?;
    manifest.write_beside(out)?;
    Ok(vectors)
}
