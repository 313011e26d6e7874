//! Fitted models of all three families and their versioned JSON form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{DirichletComponent, DirichletMixture, GaussComponent, GaussianMixture};
use crate::error::{Error, Result};
use crate::mixture::{EmReport, MixtureDensity, VmfMixture};
use crate::vmf::VmfComponent;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Vmm,
    Gmm,
    Dmm,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Vmm, Family::Gmm, Family::Dmm];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Vmm => "vmm",
            Family::Gmm => "gmm",
            Family::Dmm => "dmm",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vmm" => Ok(Family::Vmm),
            "gmm" => Ok(Family::Gmm),
            "dmm" => Ok(Family::Dmm),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mixture {
    Vmm(VmfMixture),
    Gmm(GaussianMixture),
    Dmm(DirichletMixture),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub iterations: usize,
    /// Final mean log-likelihood per training vector.
    pub loglik: f64,
    /// Training-set mean of the ΔLSF sum, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_sum_v: Option<f64>,
}

impl ModelMeta {
    pub fn from_report<M>(report: &EmReport<M>, mean_sum_v: Option<f64>) -> Self {
        ModelMeta {
            seed: report.seed,
            iterations: report.iterations,
            loglik: report.final_log_likelihood(),
            mean_sum_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub mixture: Mixture,
    pub meta: ModelMeta,
}

impl FittedModel {
    pub fn family(&self) -> Family {
        match self.mixture {
            Mixture::Vmm(_) => Family::Vmm,
            Mixture::Gmm(_) => Family::Gmm,
            Mixture::Dmm(_) => Family::Dmm,
        }
    }

    /// Row length of the representation the model lives on.
    pub fn dim(&self) -> usize {
        match &self.mixture {
            Mixture::Vmm(m) => m.dim(),
            Mixture::Gmm(m) => m.dim(),
            Mixture::Dmm(m) => m.dim(),
        }
    }

    /// LPC order `K`, which is also the number of degrees of freedom.
    pub fn order(&self) -> usize {
        match self.family() {
            Family::Gmm => self.dim(),
            Family::Vmm | Family::Dmm => self.dim() - 1,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match &self.mixture {
            Mixture::Vmm(m) => m.weights(),
            Mixture::Gmm(m) => m.weights(),
            Mixture::Dmm(m) => m.weights(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights().len()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            version: FORMAT_VERSION,
            family: self.family(),
            dim: self.dim(),
            weights: self.weights().to_vec(),
            components: match &self.mixture {
                Mixture::Vmm(m) => m
                    .components()
                    .iter()
                    .map(|c| ComponentDoc::Vmf {
                        mu: c.mu.clone(),
                        lambda: c.lambda,
                    })
                    .collect(),
                Mixture::Gmm(m) => m
                    .components()
                    .iter()
                    .map(|c| {
                        let cov = c.covariance();
                        ComponentDoc::Gauss {
                            mean: c.mean().to_vec(),
                            covariance: (0..cov.nrows())
                                .map(|i| cov.row(i).iter().copied().collect())
                                .collect(),
                        }
                    })
                    .collect(),
                Mixture::Dmm(m) => m
                    .components()
                    .iter()
                    .map(|c| ComponentDoc::Dirichlet {
                        alpha: c.alpha().to_vec(),
                    })
                    .collect(),
            },
            meta: self.meta.clone(),
        };
        let mut text =
            serde_json::to_string_pretty(&doc).map_err(|e| Error::Schema(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        let schema = |e: Error| Error::Schema(e.to_string());
        let mixture = match doc.family {
            Family::Vmm => {
                let comps = doc
                    .components
                    .into_iter()
                    .map(|c| match c {
                        ComponentDoc::Vmf { mu, lambda } => {
                            VmfComponent::new(mu, lambda).map_err(schema)
                        }
                        _ => Err(Error::Schema(
                            "vmm component needs `mu` and `lambda`".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Mixture::Vmm(VmfMixture::new(doc.weights, comps).map_err(schema)?)
            }
            Family::Gmm => {
                let comps = doc
                    .components
                    .into_iter()
                    .map(|c| match c {
                        ComponentDoc::Gauss { mean, covariance } => {
                            let k = mean.len();
                            if covariance.len() != k || covariance.iter().any(|r| r.len() != k) {
                                return Err(Error::Schema("covariance must be a K×K array".into()));
                            }
                            let cov = DMatrix::from_fn(k, k, |i, j| covariance[i][j]);
                            GaussComponent::new(mean, cov).map_err(schema)
                        }
                        _ => Err(Error::Schema(
                            "gmm component needs `mean` and `covariance`".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Mixture::Gmm(GaussianMixture::new(doc.weights, comps).map_err(schema)?)
            }
            Family::Dmm => {
                let comps = doc
                    .components
                    .into_iter()
                    .map(|c| match c {
                        ComponentDoc::Dirichlet { alpha } => {
                            DirichletComponent::new(alpha).map_err(schema)
                        }
                        _ => Err(Error::Schema("dmm component needs `alpha`".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Mixture::Dmm(DirichletMixture::new(doc.weights, comps).map_err(schema)?)
            }
        };
        let model = FittedModel {
            mixture,
            meta: doc.meta,
        };
        if model.dim() != doc.dim {
            return Err(Error::Schema(format!(
                "declared dim {} but components have {}",
                doc.dim,
                model.dim()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FittedModel::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    family: Family,
    dim: usize,
    weights: Vec<f64>,
    components: Vec<ComponentDoc>,
    meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ComponentDoc {
    Vmf {
        mu: Vec<f64>,
        lambda: f64,
    },
    Gauss {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Dirichlet {
        alpha: Vec<f64>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ModelMeta {
        ModelMeta {
            seed: 7,
            iterations: 3,
            loglik: -1.234_567_890_123_456_7,
            mean_sum_v: Some(0.8),
        }
    }

    fn vmm() -> FittedModel {
        let s = 1.0 / 3.0f64.sqrt();
        let c1 = VmfComponent::new(vec![s, s, s], 12.345_678_901_234_567).unwrap();
        let c2 = VmfComponent::new(vec![0.0, 0.6, 0.8], 0.1).unwrap();
        FittedModel {
            mixture: Mixture::Vmm(VmfMixture::new(vec![0.3, 0.7], vec![c1, c2]).unwrap()),
            meta: meta(),
        }
    }

    #[test]
    fn round_trips_every_family() {
        let gmm = FittedModel {
            mixture: Mixture::Gmm(
                GaussianMixture::new(
                    vec![1.0],
                    vec![GaussComponent::new(
                        vec![0.1, 0.2],
                        DMatrix::from_row_slice(2, 2, &[2.0, 0.1 / 3.0, 0.1 / 3.0, 1.0]),
                    )
                    .unwrap()],
                )
                .unwrap(),
            ),
            meta: ModelMeta {
                mean_sum_v: None,
                ..meta()
            },
        };
        let dmm = FittedModel {
            mixture: Mixture::Dmm(
                DirichletMixture::new(
                    vec![1.0],
                    vec![DirichletComponent::new(vec![0.1, 2.0 / 3.0, 7.0]).unwrap()],
                )
                .unwrap(),
            ),
            meta: meta(),
        };
        for model in [vmm(), gmm, dmm] {
            let text = model.to_json().unwrap();
            let back = FittedModel::from_json(&text).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn orders_and_families() {
        let m = vmm();
        assert_eq!(m.family(), Family::Vmm);
        assert_eq!(m.dim(), 3);
        assert_eq!(m.order(), 2);
        assert_eq!("GMM".parse::<Family>().unwrap(), Family::Gmm);
        assert!("bmm".parse::<Family>().is_err());
    }

    #[test]
    fn rejects_bad_documents() {
        let text = vmm().to_json().unwrap();
        let bad = [
            text.replace("\"version\": 1", "\"version\": 2"),
            text.replace("\"family\": \"vmm\"", "\"family\": \"dmm\""),
            text.replace("\"dim\": 3", "\"dim\": 4"),
            text.replace("0.3", "0.4"),
            "{}".to_string(),
            "not json".to_string(),
        ];
        for doc in bad {
            assert!(
                matches!(FittedModel::from_json(&doc), Err(Error::Schema(_))),
                "{doc}"
            );
        }
    }
}
