//! Quasi-static crawler on granular media.
//!
//! Two limbs, four position-controlled joints, ordered (left base, right
//! base, left fin, right fin). Each step the joints move to the clamped
//! targets; a limb generates traction when its fin tip is below the surface
//! (base dipped) *and* sweeping backward. The body then advances by an
//! explicit force balance — no inertia, no velocities in the state, so a
//! constant action stalls after one step.
//!
//! Per limb and step:
//!
//! ```text
//! depth     h = L · max(0, sin(base)) · max(0, cos(fin − attack_angle))
//! sweep     v = max(0, L·sin(fin) − L·sin(fin_prev))          (backward tip travel)
//! traction  T = traction_coeff · density · area · stiffness · curvature
//!               · h · v · (1 − slip) · max(0, 1 + heterogeneity·g)
//! ```
//!
//! and the body solves `normalizer·d = (T_l + T_r) − resistance·d` with
//! `resistance = body_drag_coeff · density · (1 + 5·moisture)`, turning by
//! `turn_coeff·(T_l − T_r)` and slipping sideways by `lateral_coeff·(T_l −
//! T_r)`. All coefficients come from the calibration file; nothing about the
//! fin or media orderings is hard-coded here.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibration;
use crate::env::{RolloutEnv, RolloutPlan};
use crate::error::{EnvError, SimError};
use crate::policy::GroupStructure;
use crate::rng::rng_from_seed;
use crate::DenseVector;

pub const NUM_JOINTS: usize = 4;
pub const LEFT_BASE: usize = 0;
pub const RIGHT_BASE: usize = 1;
pub const LEFT_FIN: usize = 2;
pub const RIGHT_FIN: usize = 3;
/// Joint travel limit, radians.
pub const JOINT_LIMIT: f64 = FRAC_PI_2;

/// Granular medium, fully assembled from a calibration document.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediaParams {
    /// g/ml.
    pub density: f64,
    /// Std-dev of multiplicative per-limb traction noise.
    pub heterogeneity: f64,
    /// Water mass fraction; enters only through body drag.
    pub moisture: f64,
    /// Traction fraction lost to grain slip, in [0, 1).
    pub slip: f64,
    /// Fin entry angle the medium engages best, radians.
    pub attack_angle: f64,
    pub traction_coeff: f64,
    pub body_drag_coeff: f64,
}

impl MediaParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let finite = [
            self.density,
            self.heterogeneity,
            self.moisture,
            self.slip,
            self.attack_angle,
            self.traction_coeff,
            self.body_drag_coeff,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SimError::InvalidMedia("non-finite parameter".into()));
        }
        if self.density <= 0.0 {
            return Err(SimError::InvalidMedia(format!("density {} must be > 0", self.density)));
        }
        if self.heterogeneity < 0.0 {
            return Err(SimError::InvalidMedia("heterogeneity must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.moisture) {
            return Err(SimError::InvalidMedia("moisture must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(SimError::InvalidMedia("slip must be in [0, 1)".into()));
        }
        if self.traction_coeff <= 0.0 || self.body_drag_coeff < 0.0 {
            return Err(SimError::InvalidMedia("traction/drag coefficients out of range".into()));
        }
        Ok(())
    }
}

/// Fin plate mounted at the limb end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinShape {
    pub label: String,
    /// Effective plate area, cm².
    pub area: f64,
    /// ≥ 1 multiplier on engaged contact area.
    pub curvature_factor: f64,
    /// (0, 1] fraction of area retained under load.
    pub stiffness: f64,
}

impl FinShape {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.area.is_finite() && self.area > 0.0) {
            return Err(SimError::InvalidFin(format!("area {} must be > 0", self.area)));
        }
        if !(self.curvature_factor.is_finite() && self.curvature_factor >= 1.0) {
            return Err(SimError::InvalidFin(format!(
                "curvature_factor {} must be >= 1",
                self.curvature_factor
            )));
        }
        if !(self.stiffness.is_finite() && self.stiffness > 0.0 && self.stiffness <= 1.0) {
            return Err(SimError::InvalidFin(format!(
                "stiffness {} must be in (0, 1]",
                self.stiffness
            )));
        }
        Ok(())
    }
}

/// Body and balance constants shared by all media.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGeometry {
    pub limb_length_cm: f64,
    pub displacement_normalizer: f64,
    pub turn_coeff: f64,
    pub lateral_coeff: f64,
}

impl SimGeometry {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.limb_length_cm.is_finite()
            && self.limb_length_cm > 0.0
            && self.displacement_normalizer.is_finite()
            && self.displacement_normalizer > 0.0
            && self.turn_coeff.is_finite()
            && self.lateral_coeff.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidGeometry(format!("{self:?}")))
        }
    }
}

/// Pose and joint configuration; no velocities (quasi-static).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrawlerState {
    /// cm, along the initial heading.
    pub x: f64,
    /// cm, to the left of the initial heading.
    pub y: f64,
    /// radians.
    pub heading: f64,
    /// (left base, right base, left fin, right fin), radians.
    pub joints: [f64; NUM_JOINTS],
    pub step_index: u64,
}

impl CrawlerState {
    /// Canonical zero state: origin pose, flat joints.
    pub fn initial() -> Self {
        Self { x: 0.0, y: 0.0, heading: 0.0, joints: [0.0; NUM_JOINTS], step_index: 0 }
    }
}

/// What one step produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub new_state: CrawlerState,
    /// cm along the body axis at the start of the step.
    pub displacement: f64,
    /// cm sideways (left positive).
    pub lateral: f64,
    pub traction_left: f64,
    pub traction_right: f64,
}

fn limb_traction(
    base: f64,
    fin_prev: f64,
    fin: f64,
    media: &MediaParams,
    shape: &FinShape,
    geom: &SimGeometry,
    noise: f64,
) -> f64 {
    let depth = geom.limb_length_cm * base.sin().max(0.0) * (fin - media.attack_angle).cos().max(0.0);
    let sweep = (geom.limb_length_cm * fin.sin() - geom.limb_length_cm * fin_prev.sin()).max(0.0);
    media.traction_coeff
        * media.density
        * shape.area
        * shape.stiffness
        * shape.curvature_factor
        * depth
        * sweep
        * (1.0 - media.slip)
        * noise
}

/// Advance one step toward the given joint targets (clamped to ±π/2).
///
/// Draws exactly two standard normals from `rng` (left limb first), even when
/// heterogeneity is zero, so the stream layout does not depend on the medium.
pub fn step<R: Rng + ?Sized>(
    state: &CrawlerState,
    action: &[f64],
    media: &MediaParams,
    shape: &FinShape,
    geom: &SimGeometry,
    rng: &mut R,
) -> Result<StepResult, SimError> {
    if action.len() != NUM_JOINTS {
        return Err(SimError::InvalidAction(format!("{} values", action.len())));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(SimError::InvalidAction(format!("{action:?}")));
    }
    let mut joints = [0.0; NUM_JOINTS];
    for (j, &target) in action.iter().enumerate() {
        joints[j] = target.clamp(-JOINT_LIMIT, JOINT_LIMIT);
    }

    let g_left: f64 = rng.sample(StandardNormal);
    let g_right: f64 = rng.sample(StandardNormal);
    let noise_left = (1.0 + media.heterogeneity * g_left).max(0.0);
    let noise_right = (1.0 + media.heterogeneity * g_right).max(0.0);

    let traction_left = limb_traction(
        joints[LEFT_BASE],
        state.joints[LEFT_FIN],
        joints[LEFT_FIN],
        media,
        shape,
        geom,
        noise_left,
    );
    let traction_right = limb_traction(
        joints[RIGHT_BASE],
        state.joints[RIGHT_FIN],
        joints[RIGHT_FIN],
        media,
        shape,
        geom,
        noise_right,
    );

    let resistance = media.body_drag_coeff * media.density * (1.0 + 5.0 * media.moisture);
    let thrust = traction_left + traction_right;
    // normalizer·d = thrust − resistance·d, and thrust ≥ 0, so d ≥ 0.
    let displacement = thrust / (geom.displacement_normalizer + resistance);
    let imbalance = traction_left - traction_right;
    let lateral = geom.lateral_coeff * imbalance;
    let turn = geom.turn_coeff * imbalance;

    let (sin_h, cos_h) = state.heading.sin_cos();
    let new_state = CrawlerState {
        x: state.x + displacement * cos_h - lateral * sin_h,
        y: state.y + displacement * sin_h + lateral * cos_h,
        heading: state.heading + turn,
        joints,
        step_index: state.step_index + 1,
    };
    Ok(StepResult { new_state, displacement, lateral, traction_left, traction_right })
}

/// A fully configured simulator: medium, fin, geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct CrawlerEnv {
    pub media: MediaParams,
    pub fin: FinShape,
    pub geometry: SimGeometry,
}

impl CrawlerEnv {
    pub fn new(media: MediaParams, fin: FinShape, geometry: SimGeometry) -> Result<Self, SimError> {
        media.validate()?;
        fin.validate()?;
        geometry.validate()?;
        Ok(Self { media, fin, geometry })
    }

    /// Assemble from a calibration document and preset names.
    pub fn from_calibration(
        cal: &Calibration,
        media_name: &str,
        fin_label: &str,
    ) -> Result<Self, SimError> {
        Self::new(cal.media_params(media_name)?, cal.fin_shape(fin_label)?, cal.geometry())
    }

    /// Assemble from the embedded default calibration.
    pub fn preset(media_name: &str, fin_label: &str) -> Result<Self, SimError> {
        Self::from_calibration(default_calibration(), media_name, fin_label)
    }

    /// Zero state plus a freshly seeded media-noise stream.
    pub fn reset(&self, seed: u64) -> (CrawlerState, ChaCha8Rng) {
        (CrawlerState::initial(), rng_from_seed(seed))
    }

    /// Run a full action sequence from reset; one result per step.
    pub fn rollout(&self, actions: &[DenseVector], seed: u64) -> Result<Vec<StepResult>, SimError> {
        let (mut state, mut rng) = self.reset(seed);
        let mut results = Vec::with_capacity(actions.len());
        for action in actions {
            let result = step(&state, action.as_slice(), &self.media, &self.fin, &self.geometry, &mut rng)?;
            state = result.new_state;
            results.push(result);
        }
        Ok(results)
    }

    /// Trajectory dump: `step,x,y,heading,joint_lb,joint_rb,joint_lf,joint_rf,traction_l,traction_r`.
    pub fn trajectory_csv(&self, actions: &[DenseVector], seed: u64) -> Result<String, SimError> {
        let results = self.rollout(actions, seed)?;
        let mut out = String::from(
            "step,x,y,heading,joint_lb,joint_rb,joint_lf,joint_rf,traction_l,traction_r\n",
        );
        for r in &results {
            let s = &r.new_state;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.step_index,
                s.x,
                s.y,
                s.heading,
                s.joints[LEFT_BASE],
                s.joints[RIGHT_BASE],
                s.joints[LEFT_FIN],
                s.joints[RIGHT_FIN],
                r.traction_left,
                r.traction_right,
            );
        }
        Ok(out)
    }
}

impl RolloutEnv for CrawlerEnv {
    /// Reward: final displacement along the initial heading, in cm.
    fn evaluate(&self, plan: &RolloutPlan) -> Result<f64, EnvError> {
        if plan.actions.is_empty() {
            return Err(EnvError::InvalidPlan("empty action sequence".into()));
        }
        let results = self.rollout(&plan.actions, plan.seed)?;
        Ok(results.last().map_or(0.0, |r| r.new_state.x))
    }
}

fn default_calibration() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(Calibration::default_embedded)
}

/// Media preset from the embedded default calibration.
pub fn preset_media(name: &str) -> Result<MediaParams, SimError> {
    default_calibration().media_params(name)
}

/// Fin preset from the embedded default calibration.
pub fn preset_fin(label: &str) -> Result<FinShape, SimError> {
    default_calibration().fin_shape(label)
}

/// The crawler's canonical exploration groups: fin joints share one noise
/// scale, base joints another.
pub fn crawler_groups() -> GroupStructure {
    GroupStructure::new(
        vec![vec![LEFT_FIN, RIGHT_FIN], vec![LEFT_BASE, RIGHT_BASE]],
        vec!["fin_joints".into(), "base_joints".into()],
    )
    .expect("static group structure is valid")
}

/// A symmetric 20-step paddling cycle: dip the bases while the fins sweep
/// back, lift while they return. Used by tests and as a sanity reference.
pub fn reference_paddle_cycle(steps: usize) -> Vec<DenseVector> {
    (0..steps)
        .map(|t| {
            let phase = (t % 20) as f64 / 20.0;
            let (base, fin) = if phase < 0.5 {
                (0.7, -0.6 + 2.4 * phase) // power stroke: dipped, sweeping back
            } else {
                (-0.3, 0.6 - 2.4 * (phase - 0.5)) // recovery: lifted, returning
            };
            DenseVector::from_vec(vec![base, base, fin, fin])
        })
        .collect()
}
