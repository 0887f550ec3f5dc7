//! Periodic linear-in-features action model.
//!
//! Actions are linear in a bank of time-shifted sine basis functions: at step
//! `t` the joint targets are `a(t) = (W·Z + M + E)·φ(t)` where `M` is the mean
//! policy, `W·Z` is a correlated exploration term living on a `K`-dimensional
//! latent manifold shared across joint groups, and `E` is per-group isotropic
//! noise with precision `tau_m`. Timesteps are 0-based.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::rng::rng_from_seed;
use crate::{DenseMatrix, DenseVector};

/// Timing of the sine basis bank.
///
/// The basis phase advances two full cycles over one episode of
/// `period_steps`, so the pattern repeats every `period_steps / 2` steps;
/// `period_steps` must be even for that identity to be exact on integer steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisConfig {
    /// Episode length T in timesteps.
    pub period_steps: usize,
    /// Number of phase-shifted sine functions J.
    pub num_basis: usize,
}

impl BasisConfig {
    pub fn new(period_steps: usize, num_basis: usize) -> Result<Self, PolicyError> {
        let cfg = Self { period_steps, num_basis };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let fail = |reason| PolicyError::InvalidBasis {
            period_steps: self.period_steps,
            num_basis: self.num_basis,
            reason,
        };
        if self.period_steps < 2 {
            return Err(fail("period_steps must be at least 2"));
        }
        if self.period_steps % 2 != 0 {
            return Err(fail("period_steps must be even"));
        }
        if self.num_basis < 1 {
            return Err(fail("num_basis must be at least 1"));
        }
        Ok(())
    }
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { period_steps: 20, num_basis: 10 }
    }
}

/// Ordered partition of the action dimensions into groups that share one
/// exploration precision and one ARD column scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
    labels: Vec<String>,
    /// group index per action dimension, derived at construction
    dim_to_group: Vec<usize>,
}

impl GroupStructure {
    /// Build a partition of `0..D`; `labels` may be empty (names are generated)
    /// or must match the group count.
    pub fn new(groups: Vec<Vec<usize>>, labels: Vec<String>) -> Result<Self, PolicyError> {
        if groups.is_empty() {
            return Err(PolicyError::InvalidGroups("at least one group required".into()));
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(PolicyError::InvalidGroups("empty group".into()));
        }
        let dim = groups.iter().map(|g| g.len()).sum::<usize>();
        let mut dim_to_group = vec![usize::MAX; dim];
        for (m, group) in groups.iter().enumerate() {
            for &i in group {
                if i >= dim {
                    return Err(PolicyError::InvalidGroups(format!(
                        "index {i} out of range for {dim} action dims"
                    )));
                }
                if dim_to_group[i] != usize::MAX {
                    return Err(PolicyError::InvalidGroups(format!("index {i} assigned twice")));
                }
                dim_to_group[i] = m;
            }
        }
        let labels = if labels.is_empty() {
            (1..=groups.len()).map(|m| format!("group{m}")).collect()
        } else if labels.len() == groups.len() {
            labels
        } else {
            return Err(PolicyError::InvalidGroups(format!(
                "{} labels for {} groups",
                labels.len(),
                groups.len()
            )));
        };
        Ok(Self { groups, labels, dim_to_group })
    }

    /// One singleton group per action dimension (the diagonal ablation).
    pub fn singletons(dim: usize) -> Self {
        let groups = (0..dim).map(|i| vec![i]).collect();
        let labels = (0..dim).map(|i| format!("dim{i}")).collect();
        Self::new(groups, labels).expect("singleton partition is always valid")
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn action_dim(&self) -> usize {
        self.dim_to_group.len()
    }

    pub fn group(&self, m: usize) -> &[usize] {
        &self.groups[m]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn group_of(&self, dim: usize) -> usize {
        self.dim_to_group[dim]
    }
}

/// Full parameterisation of the policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    /// Mean policy weights, D×J (radians per unit basis value).
    pub m: DenseMatrix,
    /// Latent-to-action projection, D×K.
    pub w: DenseMatrix,
    /// Per-group exploration noise precisions, length = number of groups.
    pub tau: DenseVector,
    pub groups: GroupStructure,
    pub basis: BasisConfig,
}

impl PolicyParams {
    pub fn new(
        m: DenseMatrix,
        w: DenseMatrix,
        tau: DenseVector,
        groups: GroupStructure,
        basis: BasisConfig,
    ) -> Result<Self, PolicyError> {
        let params = Self { m, w, tau, groups, basis };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.basis.validate()?;
        let d = self.groups.action_dim();
        if self.m.nrows() != d || self.m.ncols() != self.basis.num_basis {
            return Err(PolicyError::DimensionMismatch(format!(
                "M is {}x{}, expected {}x{}",
                self.m.nrows(),
                self.m.ncols(),
                d,
                self.basis.num_basis
            )));
        }
        if self.w.nrows() != d {
            return Err(PolicyError::DimensionMismatch(format!(
                "W has {} rows, expected {}",
                self.w.nrows(),
                d
            )));
        }
        if self.tau.len() != self.groups.num_groups() {
            return Err(PolicyError::DimensionMismatch(format!(
                "tau has {} entries for {} groups",
                self.tau.len(),
                self.groups.num_groups()
            )));
        }
        for (m, &t) in self.tau.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(PolicyError::InvalidTau { group: m, value: t });
            }
        }
        Ok(())
    }

    /// Latent dimension K (number of columns of W).
    pub fn latent_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.groups.action_dim()
    }

    /// Standard experiment initialization: zero mean, small random latent
    /// projection, one shared precision per group.
    ///
    /// `W` must not start at zero — the all-zero projection is a fixed point
    /// of the variational updates, so nothing would ever flow into the latent
    /// space. A small seeded perturbation (`w_scale`, typically 0.1) breaks
    /// that symmetry reproducibly.
    pub fn seeded_init(
        groups: GroupStructure,
        basis: BasisConfig,
        k: usize,
        tau0: f64,
        w_scale: f64,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let d = groups.action_dim();
        let mut rng = rng_from_seed(seed);
        let mut w = DMatrix::zeros(d, k);
        for i in 0..d {
            for c in 0..k {
                w[(i, c)] = w_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let tau = DVector::from_element(groups.num_groups(), tau0);
        Self::new(DMatrix::zeros(d, basis.num_basis), w, tau, groups, basis)
    }

    pub fn to_json(&self) -> PolicyParamsJson {
        PolicyParamsJson {
            t: self.basis.period_steps,
            j: self.basis.num_basis,
            k: self.latent_dim(),
            groups: self.groups.groups().to_vec(),
            m: matrix_rows(&self.m),
            w: matrix_rows(&self.w),
            tau: self.tau.iter().copied().collect(),
            labels: self.groups.labels().to_vec(),
        }
    }

    pub fn from_json(doc: &PolicyParamsJson) -> Result<Self, PolicyError> {
        let basis = BasisConfig::new(doc.t, doc.j)?;
        let groups = GroupStructure::new(doc.groups.clone(), doc.labels.clone())?;
        let d = groups.action_dim();
        let m = matrix_from_rows(&doc.m, d, doc.j, "M")?;
        let w = matrix_from_rows(&doc.w, d, doc.k, "W")?;
        let tau = DVector::from_vec(doc.tau.clone());
        Self::new(m, w, tau, groups, basis)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("policy params always serialise")
    }

    pub fn from_json_str(text: &str) -> Result<Self, PolicyError> {
        let doc: PolicyParamsJson = serde_json::from_str(text)?;
        Self::from_json(&doc)
    }
}

/// Serialised form: row-major matrices, optional group labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParamsJson {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub groups: Vec<Vec<usize>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
}

fn matrix_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    name: &str,
) -> Result<DenseMatrix, PolicyError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(PolicyError::DimensionMismatch(format!(
            "{name} must be {nrows} rows of {ncols} entries"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

/// Whether one exploration draw covers a whole rollout or one timestep.
///
/// Per-rollout is the default: a single draw reused for all T steps keeps the
/// executed gait smooth. Per-timestep redraws are available behind this flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    PerRollout,
    PerTimestep,
}

/// One sampled exploration: latent coordinates Z (K×J, standard normal) and
/// additive noise E (D×J, row block for group m has variance 1/tau_m).
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationDraw {
    pub z: DenseMatrix,
    pub e: DenseMatrix,
    pub mode: DrawMode,
}

impl ExplorationDraw {
    /// The zero draw; realises the mean policy.
    pub fn zeros(params: &PolicyParams, mode: DrawMode) -> Self {
        Self {
            z: DMatrix::zeros(params.latent_dim(), params.basis.num_basis),
            e: DMatrix::zeros(params.action_dim(), params.basis.num_basis),
            mode,
        }
    }
}

/// Evaluate the basis bank at integer step `t` (taken modulo the period).
///
/// `φ_j(t) = sin(2π·(2t/T) + 2π·j/J)` for `j = 0..J`. The phase is reduced
/// modulo the half period before any float arithmetic, so
/// `basis_vector(t) == basis_vector(t + T/2)` holds bitwise.
pub fn basis_vector(t: usize, cfg: &BasisConfig) -> DenseVector {
    let half = cfg.period_steps / 2;
    let t_red = (t % half) as f64;
    let j_count = cfg.num_basis as f64;
    let base = std::f64::consts::TAU * 2.0 * t_red / cfg.period_steps as f64;
    DVector::from_fn(cfg.num_basis, |j, _| {
        (base + std::f64::consts::TAU * j as f64 / j_count).sin()
    })
}

/// Sample Z and E for one rollout (or one timestep, in per-timestep mode).
///
/// Entries are drawn row-major, Z first then E, so the stream layout is stable
/// for replay: `K·J` standard normals followed by `D·J` scaled normals.
pub fn sample_exploration<R: Rng + ?Sized>(
    params: &PolicyParams,
    rng: &mut R,
    mode: DrawMode,
) -> ExplorationDraw {
    let j = params.basis.num_basis;
    let k = params.latent_dim();
    let d = params.action_dim();
    let mut z = DMatrix::zeros(k, j);
    for r in 0..k {
        for c in 0..j {
            z[(r, c)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut e = DMatrix::zeros(d, j);
    for i in 0..d {
        let std = 1.0 / params.tau[params.groups.group_of(i)].sqrt();
        for c in 0..j {
            e[(i, c)] = std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    ExplorationDraw { z, e, mode }
}

/// The realised per-rollout parameter matrix `θ = W·Z + M + E`.
pub fn realized_theta(params: &PolicyParams, draw: &ExplorationDraw) -> Result<DenseMatrix, PolicyError> {
    check_draw(params, draw)?;
    Ok(&params.w * &draw.z + &params.m + &draw.e)
}

/// Joint-angle targets at step `t` under an exploration draw:
/// `a(t) = (W·Z + M + E)·φ(t)`.
pub fn compute_action(
    params: &PolicyParams,
    draw: &ExplorationDraw,
    t: usize,
) -> Result<DenseVector, PolicyError> {
    let theta = realized_theta(params, draw)?;
    Ok(theta * basis_vector(t, &params.basis))
}

/// Joint-angle targets of the mean policy, `a(t) = M·φ(t)`.
pub fn mean_action(params: &PolicyParams, t: usize) -> DenseVector {
    &params.m * basis_vector(t, &params.basis)
}

fn check_draw(params: &PolicyParams, draw: &ExplorationDraw) -> Result<(), PolicyError> {
    let (k, j, d) = (params.latent_dim(), params.basis.num_basis, params.action_dim());
    if draw.z.nrows() != k || draw.z.ncols() != j || draw.e.nrows() != d || draw.e.ncols() != j {
        return Err(PolicyError::DimensionMismatch(format!(
            "draw Z {}x{} E {}x{} does not fit policy K={} D={} J={}",
            draw.z.nrows(),
            draw.z.ncols(),
            draw.e.nrows(),
            draw.e.ncols(),
            k,
            d,
            j
        )));
    }
    Ok(())
}
