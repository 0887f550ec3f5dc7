//! Coordinate-ascent updates for the weighted posterior.
//!
//! Observations are the basis columns of the realised parameter matrices:
//! in per-rollout mode each (rollout h, basis column j) pair is one weighted
//! D-dimensional observation `y_n = θ_h[:,j]` with weight `d_h`; per-timestep
//! mode uses each timestep's columns with weight `d_h/T`. Every update below
//! is the exact block maximiser of the weighted ELBO given the other blocks,
//! which is what the monotonicity tests lean on.

use nalgebra::DMatrix;

use super::{HyperParams, QPosterior, RolloutRecord};
use crate::policy::GroupStructure;
use crate::{DenseMatrix, DenseVector};

/// Flattened weighted observations for one batch.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    /// Observation columns, D×N.
    pub y: DenseMatrix,
    /// Basis column index j(n) per observation.
    pub col_of: Vec<usize>,
    /// Weight d_n per observation.
    pub weights: DenseVector,
    /// Number of basis columns J (columns of M).
    pub num_basis: usize,
}

impl ObservationSet {
    /// Flatten a weighted batch; weights must already be filled.
    pub fn from_records(records: &[RolloutRecord]) -> Self {
        assert!(!records.is_empty(), "observation set needs at least one rollout");
        let num_basis = records[0].thetas[0].ncols();
        let d = records[0].thetas[0].nrows();
        let n_total: usize = records.iter().map(|r| r.thetas.len() * num_basis).sum();
        let mut y = DMatrix::zeros(d, n_total);
        let mut col_of = Vec::with_capacity(n_total);
        let mut weights = Vec::with_capacity(n_total);
        let mut col = 0;
        for rec in records {
            let share = rec.weight / rec.thetas.len() as f64;
            for theta in &rec.thetas {
                assert_eq!(theta.shape(), (d, num_basis), "inconsistent theta shapes in batch");
                for j in 0..num_basis {
                    y.set_column(col, &theta.column(j));
                    col_of.push(j);
                    weights.push(share);
                    col += 1;
                }
            }
        }
        Self { y, col_of, weights: DenseVector::from_vec(weights), num_basis }
    }

    pub fn len(&self) -> usize {
        self.col_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col_of.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `y_n − qM_{:,j(n)}` for every observation.
fn residuals(obs: &ObservationSet, m: &DenseMatrix) -> DenseMatrix {
    let mut r = obs.y.clone();
    for n in 0..obs.len() {
        let mut col = r.column_mut(n);
        col -= m.column(obs.col_of[n]);
    }
    r
}

/// Invert a symmetric positive definite matrix, regularising by `1e-10·I`
/// (logged) if the Cholesky factorisation fails.
fn spd_inverse(a: DenseMatrix, context: &str) -> DenseMatrix {
    let n = a.nrows();
    let sym = (&a + a.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return chol.inverse();
    }
    log::warn!("singular precision in {context}; regularising by 1e-10*I");
    let reg = sym + DMatrix::identity(n, n) * 1e-10;
    reg.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| reg.try_inverse())
        .expect("regularised precision must be invertible")
}

/// `Ψ_m = E[W^(m)ᵀ W^(m)] = W̄ᵀW̄ + D_m·Σ_w`.
fn group_psi(q: &QPosterior, rows: &[usize], m: usize) -> DenseMatrix {
    let wbar = q.w_mean.select_rows(rows);
    wbar.transpose() * &wbar + rows.len() as f64 * &q.w_cov[m]
}

/// Latent coordinates: shared covariance
/// `Σ_z = (I + Σ_m E[τ_m]·Ψ_m)⁻¹` and means
/// `μ_n = Σ_z·Σ_m E[τ_m]·W̄^(m)ᵀ(y_n^(m) − qM^(m)_{:,j(n)})`.
pub fn update_qz(obs: &ObservationSet, q: &mut QPosterior, groups: &GroupStructure) {
    let k = q.w_mean.ncols();
    if k == 0 {
        return;
    }
    let resid = residuals(obs, &q.m);
    let mut prec = DMatrix::identity(k, k);
    let mut proj = DMatrix::zeros(k, obs.len());
    for m in 0..groups.num_groups() {
        let rows = groups.group(m);
        let e_tau = q.e_tau(m);
        prec += e_tau * group_psi(q, rows, m);
        proj += e_tau * q.w_mean.select_rows(rows).transpose() * resid.select_rows(rows);
    }
    let cov = spd_inverse(prec, "update_qz");
    q.z_mean = &cov * proj;
    q.z_cov = cov;
}

/// Projection rows: per group, precision `Λ_m = diag(E[α_m,·]) + E[τ_m]·S_z`
/// with `S_z = Σ_n d_n(μ_nμ_nᵀ + Σ_z)`, row means
/// `w̄_i = Λ_m⁻¹·E[τ_m]·Σ_n d_n(y_{n,i} − qM_{i,j(n)})μ_n`, shared covariance
/// `Λ_m⁻¹`.
pub fn update_qw(obs: &ObservationSet, q: &mut QPosterior, groups: &GroupStructure) {
    let k = q.w_mean.ncols();
    if k == 0 {
        return;
    }
    let resid = residuals(obs, &q.m);
    let mut mu_weighted = q.z_mean.clone();
    for n in 0..obs.len() {
        let mut col = mu_weighted.column_mut(n);
        col *= obs.weights[n];
    }
    let s_z = &mu_weighted * q.z_mean.transpose() + obs.total_weight() * &q.z_cov;
    for m in 0..groups.num_groups() {
        let rows = groups.group(m);
        let e_tau = q.e_tau(m);
        let mut lambda = e_tau * &s_z;
        for kk in 0..k {
            lambda[(kk, kk)] += q.e_alpha(m, kk);
        }
        let cov = spd_inverse(lambda, "update_qw");
        let b = resid.select_rows(rows) * mu_weighted.transpose(); // D_m×K
        let rows_new = e_tau * b * &cov;
        for (local, &i) in rows.iter().enumerate() {
            q.w_mean.set_row(i, &rows_new.row(local));
        }
        q.w_cov[m] = cov;
    }
}

/// Mean weights: reward-weighted residual mean under the flat prior,
/// `qM_{i,j} = Σ_n d_n(y_{n,i} − w̄_iᵀμ_n) / Σ_n d_n` over observations with
/// basis column j.
pub fn update_qm(obs: &ObservationSet, q: &mut QPosterior) {
    let fitted = &q.w_mean * &q.z_mean; // D×N
    let d = obs.y.nrows();
    let mut num = DMatrix::zeros(d, obs.num_basis);
    let mut den = vec![0.0; obs.num_basis];
    for n in 0..obs.len() {
        let j = obs.col_of[n];
        let w = obs.weights[n];
        num.column_mut(j).axpy(w, &(obs.y.column(n) - fitted.column(n)), 1.0);
        den[j] += w;
    }
    for j in 0..obs.num_basis {
        q.m.set_column(j, &(num.column(j) / den[j]));
    }
}

/// ARD precisions: raw Gamma update
/// `shape = a_α + D_m/2`, `rate = b_α + ½Σ_{i∈m}(w̄_ik² + Var[w_ik])`,
/// then the structural rank-r coupling applied to `log E[α]`.
///
/// The coupling projects the groups×K matrix `L = log E[α]` onto
/// `{rank ≤ r} + row offsets + column offsets` by double-centring and
/// truncated SVD. The centred matrix always has rank ≤ min(G−1, K−1), so
/// whenever `r` reaches that bound the projection is the identity and the raw
/// update is kept bit-exactly (the default G=2 grouping with r=1 lands here).
pub fn update_qalpha(q: &mut QPosterior, groups: &GroupStructure, hyper: &HyperParams) {
    let k = q.w_mean.ncols();
    if k == 0 {
        return;
    }
    let g = groups.num_groups();
    let mut shape = DMatrix::zeros(g, k);
    let mut rate = DMatrix::zeros(g, k);
    for m in 0..g {
        let rows = groups.group(m);
        let dm = rows.len() as f64;
        for kk in 0..k {
            let sq: f64 = rows.iter().map(|&i| q.w_mean[(i, kk)].powi(2)).sum();
            shape[(m, kk)] = hyper.a_alpha + dm / 2.0;
            rate[(m, kk)] = hyper.b_alpha + 0.5 * (sq + dm * q.w_cov[m][(kk, kk)]);
        }
    }
    let bound = (g.saturating_sub(1)).min(k.saturating_sub(1));
    if hyper.r < bound {
        let l = DMatrix::from_fn(g, k, |m, kk| (shape[(m, kk)] / rate[(m, kk)]).ln());
        let grand = l.sum() / (g * k) as f64;
        let row_means: Vec<f64> = (0..g).map(|m| l.row(m).sum() / k as f64).collect();
        let col_means: Vec<f64> = (0..k).map(|kk| l.column(kk).sum() / g as f64).collect();
        let centred =
            DMatrix::from_fn(g, k, |m, kk| l[(m, kk)] - row_means[m] - col_means[kk] + grand);
        let svd = centred.svd(true, true);
        let u = svd.u.expect("svd with u requested");
        let v_t = svd.v_t.expect("svd with v_t requested");
        let mut truncated = DMatrix::zeros(g, k);
        for idx in 0..hyper.r.min(svd.singular_values.len()) {
            truncated += svd.singular_values[idx] * u.column(idx) * v_t.row(idx);
        }
        for m in 0..g {
            for kk in 0..k {
                let log_e = truncated[(m, kk)] + row_means[m] + col_means[kk] - grand;
                rate[(m, kk)] = shape[(m, kk)] / log_e.exp();
            }
        }
    }
    q.alpha.shape = shape;
    q.alpha.rate = rate;
}

/// Weighted expected squared reconstruction error per group:
/// `Σ_n d_n·E‖y_n^(m) − W^(m)z_n − qM^(m)_{:,j(n)}‖²` with the expectation
/// expanded through the W and z second moments. Shared by the τ update and
/// the ELBO.
pub(super) fn weighted_group_quads(
    obs: &ObservationSet,
    q: &QPosterior,
    groups: &GroupStructure,
) -> Vec<f64> {
    let resid = residuals(obs, &q.m);
    let k = q.w_mean.ncols();
    (0..groups.num_groups())
        .map(|m| {
            let rows = groups.group(m);
            let r_m = resid.select_rows(rows);
            let mut quad = 0.0;
            for n in 0..obs.len() {
                quad += obs.weights[n] * r_m.column(n).norm_squared();
            }
            if k > 0 {
                let psi = group_psi(q, rows, m);
                let cross = q.w_mean.select_rows(rows).transpose() * &r_m; // K×N
                let psi_mu = &psi * &q.z_mean; // K×N
                for n in 0..obs.len() {
                    let mu = q.z_mean.column(n);
                    quad += obs.weights[n]
                        * (-2.0 * cross.column(n).dot(&mu) + psi_mu.column(n).dot(&mu));
                }
                quad += obs.total_weight() * (&psi * &q.z_cov).trace();
            }
            quad
        })
        .collect()
}

/// Noise precisions: `shape_m = a_τ + D_m·(Σ_n d_n)/2`,
/// `rate_m = b_τ + ½·(weighted reconstruction error)`, with `E[τ_m]` capped
/// at `tau_cap` by lifting the rate along the fixed-shape slice (the
/// constrained maximiser when the cap binds).
pub fn update_qtau(
    obs: &ObservationSet,
    q: &mut QPosterior,
    groups: &GroupStructure,
    hyper: &HyperParams,
) {
    let quads = weighted_group_quads(obs, q, groups);
    let w_tot = obs.total_weight();
    for m in 0..groups.num_groups() {
        let dm = groups.group(m).len() as f64;
        let shape = hyper.a_tau + dm * w_tot / 2.0;
        let rate = (hyper.b_tau + 0.5 * quads[m].max(0.0)).max(shape / hyper.tau_cap);
        q.tau.shape[m] = shape;
        q.tau.rate[m] = rate;
    }
}
