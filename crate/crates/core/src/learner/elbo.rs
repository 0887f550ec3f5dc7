//! Weighted evidence lower bound.
//!
//! The objective the coordinate updates maximise: the reward weight `d_n`
//! multiplies each observation's likelihood term *and* its latent prior and
//! entropy terms, so the per-observation factors share one covariance and the
//! weights cancel inside the z update. `M` enters as a point estimate under a
//! flat prior (no prior or entropy term). All constants are kept, so values
//! are comparable across update steps; the inner loop's convergence test and
//! the monotonicity properties both run on this function.

use statrs::function::gamma::{digamma, ln_gamma};

use super::updates::weighted_group_quads;
use super::{HyperParams, ObservationSet, QPosterior};
use crate::policy::GroupStructure;
use crate::DenseMatrix;

const LN_2PI: f64 = 1.8378770664093453;

/// Entropy of a Gamma(shape, rate) distribution.
fn gamma_entropy(shape: f64, rate: f64) -> f64 {
    shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
}

/// `ln p(x) + H` pieces for one Gamma factor against its prior.
fn gamma_prior_and_entropy(
    prior_shape: f64,
    prior_rate: f64,
    e_x: f64,
    e_ln_x: f64,
    q_shape: f64,
    q_rate: f64,
) -> f64 {
    prior_shape * prior_rate.ln() - ln_gamma(prior_shape) + (prior_shape - 1.0) * e_ln_x
        - prior_rate * e_x
        + gamma_entropy(q_shape, q_rate)
}

/// Log-determinant of a symmetric positive definite matrix.
fn ln_det_spd(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let sym = (a + a.transpose()) * 0.5;
    match sym.clone().cholesky() {
        Some(chol) => 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => {
            log::warn!("ln_det fell back to eigenvalues for a non-Cholesky matrix");
            sym.symmetric_eigen().eigenvalues.iter().map(|e| e.max(1e-300).ln()).sum()
        }
    }
}

/// Evaluate the weighted ELBO of the batch under the current posterior.
pub fn elbo(
    obs: &ObservationSet,
    q: &QPosterior,
    groups: &GroupStructure,
    hyper: &HyperParams,
) -> f64 {
    let k = q.w_mean.ncols();
    let w_tot = obs.total_weight();
    let quads = weighted_group_quads(obs, q, groups);
    let mut l = 0.0;

    for m in 0..groups.num_groups() {
        let dm = groups.group(m).len() as f64;
        // Gaussian likelihood of the group's rows
        l += 0.5 * dm * w_tot * (q.e_ln_tau(m) - LN_2PI) - 0.5 * q.e_tau(m) * quads[m];
        l += gamma_prior_and_entropy(
            hyper.a_tau,
            hyper.b_tau,
            q.e_tau(m),
            q.e_ln_tau(m),
            q.tau.shape[m],
            q.tau.rate[m],
        );
    }

    if k > 0 {
        let kf = k as f64;
        // latent prior and entropy, weighted per observation
        let mu_sq: f64 = (0..obs.len())
            .map(|n| obs.weights[n] * q.z_mean.column(n).norm_squared())
            .sum();
        l += -0.5 * kf * LN_2PI * w_tot - 0.5 * (mu_sq + w_tot * q.z_cov.trace());
        l += w_tot * (0.5 * kf * (1.0 + LN_2PI) + 0.5 * ln_det_spd(&q.z_cov));

        for m in 0..groups.num_groups() {
            let rows = groups.group(m);
            let dm = rows.len() as f64;
            for kk in 0..k {
                let sq: f64 = rows.iter().map(|&i| q.w_mean[(i, kk)].powi(2)).sum();
                // row-Gaussian prior on W under the ARD precisions
                l += 0.5
                    * (dm * (q.e_ln_alpha(m, kk) - LN_2PI)
                        - q.e_alpha(m, kk) * (sq + dm * q.w_cov[m][(kk, kk)]));
                l += gamma_prior_and_entropy(
                    hyper.a_alpha,
                    hyper.b_alpha,
                    q.e_alpha(m, kk),
                    q.e_ln_alpha(m, kk),
                    q.alpha.shape[(m, kk)],
                    q.alpha.rate[(m, kk)],
                );
            }
            l += dm * (0.5 * kf * (1.0 + LN_2PI) + 0.5 * ln_det_spd(&q.w_cov[m]));
        }
    }
    l
}
