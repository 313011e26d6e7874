//! Gaussian and Dirichlet mixture baselines.

pub mod dmm;
pub mod gmm;

pub use dmm::{
    dirichlet_component_entropy, dmm_mean_sum_v, fit_dmm, DirichletComponent, DirichletMixture,
};
pub use gmm::{fit_gmm, gmm_component_entropy, GaussComponent, GaussianMixture};
