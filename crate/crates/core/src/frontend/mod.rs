//! Speech analysis front end: WAV input, framing, LPC analysis, LSF conversion.

mod framing;
mod lpc;
mod lsf;
mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use framing::{frame_count, frame_signal, preemphasize, window};
pub use lpc::{autocorrelation, levinson_durbin, lpc_from_frame, lpc_from_reflection, LpcVector};
pub use lsf::{lpc_to_lsf, lsf_to_lpc, LsfVector};
pub use wav::{read_wav, write_wav, Audio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" => Ok(WindowKind::Hann),
            "rectangular" => Ok(WindowKind::Rectangular),
            other => Err(Error::Config(format!("unknown window kind `{other}`"))),
        }
    }
}

/// Parameters of the short-time LPC analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub sample_rate_hz: u32,
    pub window_ms: f64,
    pub step_ms: f64,
    pub lpc_order: usize,
    pub preemphasis: f64,
    pub window_kind: WindowKind,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            sample_rate_hz: 16_000,
            window_ms: 25.0,
            step_ms: 20.0,
            lpc_order: 16,
            preemphasis: 0.97,
            window_kind: WindowKind::Hamming,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.step_ms > 0.0) || self.window_ms < self.step_ms {
            return Err(Error::Config(format!(
                "need window_ms >= step_ms > 0, got window {} / step {}",
                self.window_ms, self.step_ms
            )));
        }
        if self.lpc_order < 2 {
            return Err(Error::Config("lpc_order must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::Config("preemphasis must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Window length in samples.
    pub fn window_len(&self) -> usize {
        (self.window_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    /// Hop size in samples.
    pub fn step_len(&self) -> usize {
        (self.step_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }
}

/// Outcome of running the whole analysis chain over one signal.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub vectors: Vec<LsfVector>,
    pub frames: usize,
    /// Frames dropped because their recursion or root search failed (includes silent frames).
    pub skipped: usize,
    /// Frames with no energy at all.
    pub silent: usize,
}

/// Pre-emphasis, framing, LPC and LSF conversion. Frames whose recursion is
/// unstable or whose LSFs cannot be found are skipped and counted.
pub fn extract_lsf(samples: &[f64], config: &AnalysisConfig) -> Result<Extraction> {
    use rayon::prelude::*;

    config.validate()?;
    let emphasized = preemphasize(samples, config.preemphasis);
    let frames = frame_signal(&emphasized, config)?;
    let silent = frames
        .iter()
        .filter(|f| f.iter().all(|v| *v == 0.0))
        .count();
    let results: Vec<Option<LsfVector>> = frames
        .par_iter()
        .map(|frame| {
            lpc_from_frame(frame, config.lpc_order)
                .and_then(|lpc| lpc_to_lsf(&lpc))
                .ok()
        })
        .collect();
    let frames = results.len();
    let vectors: Vec<LsfVector> = results.into_iter().flatten().collect();
    Ok(Extraction {
        skipped: frames - vectors.len(),
        silent,
        frames,
        vectors,
    })
}
