//! The variational posterior and its expectations.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::digamma;

use super::HyperParams;
use crate::policy::PolicyParams;
use crate::{DenseMatrix, DenseVector};

/// Independent Gamma factors arranged as a groups×factors matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaMatrix {
    pub shape: DenseMatrix,
    pub rate: DenseMatrix,
}

/// Independent Gamma factors, one per group.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaVector {
    pub shape: DenseVector,
    pub rate: DenseVector,
}

/// Mean-field posterior over the generative model `y_n = W z_n + M_{:,j(n)} + ε`.
///
/// `M` is a point estimate (flat prior); `W` rows within a group share one
/// covariance; all `z_n` share one covariance; `α` and `τ` are Gamma factors.
#[derive(Clone, Debug, PartialEq)]
pub struct QPosterior {
    /// Point estimate of the mean weights, D×J.
    pub m: DenseMatrix,
    /// Posterior mean of the projection, D×K.
    pub w_mean: DenseMatrix,
    /// Shared row covariance of W per group, each K×K.
    pub w_cov: Vec<DenseMatrix>,
    /// Posterior means of the latent coordinates, K×N (one column per
    /// weighted observation).
    pub z_mean: DenseMatrix,
    /// Shared covariance of every z_n, K×K.
    pub z_cov: DenseMatrix,
    /// ARD precisions, groups×K.
    pub alpha: GammaMatrix,
    /// Noise precisions, one per group.
    pub tau: GammaVector,
}

impl QPosterior {
    /// Warm start from the current policy: `qM ← M`, `qW mean ← W` with
    /// covariance `1e-2·I`, latent means zero with unit covariance, Gamma
    /// factors at their priors.
    pub fn init(params: &PolicyParams, hyper: &HyperParams, n_obs: usize) -> Self {
        let k = params.latent_dim();
        let g = params.groups.num_groups();
        Self {
            m: params.m.clone(),
            w_mean: params.w.clone(),
            w_cov: (0..g).map(|_| DMatrix::identity(k, k) * 1e-2).collect(),
            z_mean: DMatrix::zeros(k, n_obs),
            z_cov: DMatrix::identity(k, k),
            alpha: GammaMatrix {
                shape: DMatrix::from_element(g, k, hyper.a_alpha),
                rate: DMatrix::from_element(g, k, hyper.b_alpha),
            },
            tau: GammaVector {
                shape: DVector::from_element(g, hyper.a_tau),
                rate: DVector::from_element(g, hyper.b_tau),
            },
        }
    }

    pub fn e_tau(&self, m: usize) -> f64 {
        self.tau.shape[m] / self.tau.rate[m]
    }

    pub fn e_ln_tau(&self, m: usize) -> f64 {
        digamma(self.tau.shape[m]) - self.tau.rate[m].ln()
    }

    pub fn e_alpha(&self, m: usize, k: usize) -> f64 {
        self.alpha.shape[(m, k)] / self.alpha.rate[(m, k)]
    }

    pub fn e_ln_alpha(&self, m: usize, k: usize) -> f64 {
        digamma(self.alpha.shape[(m, k)]) - self.alpha.rate[(m, k)].ln()
    }

    /// Expected noise precision per group as a vector.
    pub fn e_tau_vector(&self) -> DenseVector {
        DVector::from_fn(self.tau.shape.len(), |m, _| self.e_tau(m))
    }

    /// Expected ARD precisions as a groups×K matrix.
    pub fn e_alpha_matrix(&self) -> DenseMatrix {
        DMatrix::from_fn(self.alpha.shape.nrows(), self.alpha.shape.ncols(), |m, k| {
            self.e_alpha(m, k)
        })
    }

    /// Extract the posterior expectations as the next policy, reusing the
    /// template's group structure and basis.
    pub fn extract_params(&self, template: &PolicyParams) -> PolicyParams {
        PolicyParams {
            m: self.m.clone(),
            w: self.w_mean.clone(),
            tau: self.e_tau_vector(),
            groups: template.groups.clone(),
            basis: template.basis,
        }
    }
}
