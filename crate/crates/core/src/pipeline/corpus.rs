//! LSF corpora: the line-oriented text format, WAV discovery and splits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frontend::LsfVector;
use crate::transforms::{lsf_to_delta, lsf_to_srdlsf};

/// A materialized set of LSF vectors sharing one order.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfCorpus {
    pub order: usize,
    pub sample_rate: u32,
    pub vectors: Vec<LsfVector>,
}

impl LsfCorpus {
    pub fn new(order: usize, sample_rate: u32, vectors: Vec<LsfVector>) -> Result<Self> {
        if let Some(v) = vectors.iter().find(|v| v.order() != order) {
            return Err(Error::Dimension {
                expected: order,
                got: v.order(),
            });
        }
        Ok(LsfCorpus {
            order,
            sample_rate,
            vectors,
        })
    }

    /// Header line followed by one space-separated vector per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("#K={} sample_rate={}\n", self.order, self.sample_rate);
        for v in &self.vectors {
            let mut first = true;
            for x in v.values() {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{x}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty LSF file".into()))?;
        let (order, sample_rate) = parse_header(header)?;
        let mut vectors = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Parse(format!("line {}: not a list of numbers", i + 1)))?;
            if values.len() != order {
                return Err(Error::Parse(format!(
                    "line {}: expected {order} values, got {}",
                    i + 1,
                    values.len()
                )));
            }
            let v =
                LsfVector::new(values).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            vectors.push(v);
        }
        LsfCorpus::new(order, sample_rate, vectors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LsfCorpus::from_text(&text)
    }

    /// Seeded shuffle split into disjoint (train, test) parts.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Vec<LsfVector>, Vec<LsfVector>) {
        let mut index: Vec<usize> = (0..self.vectors.len()).collect();
        index.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.vectors.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.clamp(0, self.vectors.len());
        let pick = |ix: &[usize]| ix.iter().map(|&i| self.vectors[i].clone()).collect();
        (pick(&index[..n_train]), pick(&index[n_train..]))
    }
}

fn parse_header(line: &str) -> Result<(usize, u32)> {
    let body = line.strip_prefix('#').ok_or_else(|| {
        Error::Parse("LSF file must start with `#K=<order> sample_rate=<hz>`".into())
    })?;
    let mut order = None;
    let mut rate = None;
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("K", v)) => order = v.parse::<usize>().ok(),
            Some(("sample_rate", v)) => rate = v.parse::<u32>().ok(),
            _ => {}
        }
    }
    match (order, rate) {
        (Some(k), Some(r)) if k >= 1 => Ok((k, r)),
        _ => Err(Error::Parse(format!("malformed LSF header `{line}`"))),
    }
}

/// Sorted `.wav` files directly inside `dir`.
pub fn collect_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Sphere vectors (SRΔLSF) for the vMF model.
pub fn to_sphere(vectors: &[LsfVector]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|v| lsf_to_srdlsf(v).into_inner())
        .collect()
}

/// Completed ΔLSF simplex points for the Dirichlet model.
pub fn to_simplex(vectors: &[LsfVector]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|v| lsf_to_delta(v).completed())
        .collect()
}

/// Raw LSF rows for the Gaussian model.
pub fn to_rows(vectors: &[LsfVector]) -> Vec<Vec<f64>> {
    vectors.iter().map(|v| v.values().to_vec()).collect()
}

/// Empirical mean of `Σ_k v_k = s_K / π`.
pub fn mean_sum_v(vectors: &[LsfVector]) -> Option<f64> {
    if vectors.is_empty() {
        return None;
    }
    let total: f64 = vectors.iter().map(|v| v.values()[v.order() - 1]).sum();
    Some(total / vectors.len() as f64 / std::f64::consts::PI)
}
