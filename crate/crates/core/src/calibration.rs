//! Calibration file: every physical coefficient of the simulator lives in a
//! JSON document, not in code, so media/fin orderings are data.
//!
//! A default calibration ships embedded in the binary; experiments may point
//! at their own file. The document is strict: unknown fields are rejected so
//! a typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::sim::{FinShape, MediaParams, SimGeometry};

/// Per-media calibration entry. Shared coefficients (`traction_coeff`,
/// `body_drag_coeff`) live at the document's top level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaEntry {
    /// g/ml.
    pub density: f64,
    /// Std-dev of the per-step multiplicative traction noise.
    pub heterogeneity: f64,
    /// Mass fraction of water.
    pub moisture: f64,
    /// Fraction of traction lost to grain slip, in [0, 1).
    pub slip: f64,
    /// Fin entry angle (radians) at which the medium engages the plate best.
    pub attack_angle: f64,
}

/// Per-fin calibration entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinEntry {
    /// Effective plate area, cm².
    pub area: f64,
    /// ≥ 1; multiplier on engaged contact for plates that scoop at an angle.
    pub curvature_factor: f64,
    /// (0, 1]; fraction of area retained under load.
    pub stiffness: f64,
}

/// The full calibration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub limb_length_cm: f64,
    /// Traction per (cm² of plate · cm of depth · cm/step of sweep).
    pub traction_coeff: f64,
    pub body_drag_coeff: f64,
    /// Quasi-static balance stiffness: displacement solves
    /// `normalizer · d = thrust − resistance · d`.
    pub displacement_normalizer: f64,
    /// Heading change per unit of left/right traction imbalance.
    pub turn_coeff: f64,
    /// Sideways slip per unit of left/right traction imbalance.
    pub lateral_coeff: f64,
    pub media: BTreeMap<String, MediaEntry>,
    pub fins: BTreeMap<String, FinEntry>,
}

/// The calibration shipped with the crate.
pub const DEFAULT_CALIBRATION_JSON: &str = include_str!("../data/default_calibration.json");

impl Calibration {
    /// Parse and validate a calibration document.
    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        let cal: Calibration =
            serde_json::from_str(text).map_err(|e| SimError::Calibration(e.to_string()))?;
        cal.validate()?;
        Ok(cal)
    }

    /// Load from a file path.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Calibration(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// The calibration embedded in the binary.
    pub fn default_embedded() -> Self {
        Self::from_json_str(DEFAULT_CALIBRATION_JSON)
            .expect("embedded calibration must be valid")
    }

    fn validate(&self) -> Result<(), SimError> {
        self.geometry().validate()?;
        for (name, _) in &self.media {
            self.media_params(name)?;
        }
        for (name, _) in &self.fins {
            self.fin_shape(name)?;
        }
        if self.media.is_empty() {
            return Err(SimError::Calibration("no media entries".into()));
        }
        if self.fins.is_empty() {
            return Err(SimError::Calibration("no fin entries".into()));
        }
        Ok(())
    }

    /// Assemble the full media parameters for one preset name.
    pub fn media_params(&self, name: &str) -> Result<MediaParams, SimError> {
        let entry = self.media.get(name).ok_or_else(|| SimError::UnknownPreset {
            kind: "media",
            name: name.to_string(),
        })?;
        let params = MediaParams {
            density: entry.density,
            heterogeneity: entry.heterogeneity,
            moisture: entry.moisture,
            slip: entry.slip,
            attack_angle: entry.attack_angle,
            traction_coeff: self.traction_coeff,
            body_drag_coeff: self.body_drag_coeff,
        };
        params.validate()?;
        Ok(params)
    }

    /// Assemble the fin shape for one label.
    pub fn fin_shape(&self, label: &str) -> Result<FinShape, SimError> {
        let entry = self.fins.get(label).ok_or_else(|| SimError::UnknownPreset {
            kind: "fin",
            name: label.to_string(),
        })?;
        let fin = FinShape {
            label: label.to_string(),
            area: entry.area,
            curvature_factor: entry.curvature_factor,
            stiffness: entry.stiffness,
        };
        fin.validate()?;
        Ok(fin)
    }

    /// The body/limb geometry constants.
    pub fn geometry(&self) -> SimGeometry {
        SimGeometry {
            limb_length_cm: self.limb_length_cm,
            displacement_normalizer: self.displacement_normalizer,
            turn_coeff: self.turn_coeff,
            lateral_coeff: self.lateral_coeff,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_calibration_is_valid_and_complete() {
        let cal = Calibration::default_embedded();
        for name in ["poppy", "sand_day1", "sand_day2"] {
            cal.media_params(name).unwrap();
        }
        for label in ["A", "B", "C", "D"] {
            cal.fin_shape(label).unwrap();
        }
    }

    #[test]
    fn documented_media_values_are_shipped() {
        let cal = Calibration::default_embedded();
        let poppy = cal.media_params("poppy").unwrap();
        assert_eq!(poppy.density, 0.54);
        assert_eq!(poppy.heterogeneity, 0.02);
        assert_eq!(poppy.moisture, 0.0);
        let day1 = cal.media_params("sand_day1").unwrap();
        assert_eq!(day1.density, 1.46);
        assert_eq!(day1.moisture, 0.0159);
        let day2 = cal.media_params("sand_day2").unwrap();
        assert_eq!(day2.density, 1.46);
        assert_eq!(day2.moisture, 0.0087);
        assert_eq!(day1.heterogeneity, day2.heterogeneity);
    }

    #[test]
    fn documented_fin_values_are_shipped() {
        let cal = Calibration::default_embedded();
        let a = cal.fin_shape("A").unwrap();
        let b = cal.fin_shape("B").unwrap();
        let c = cal.fin_shape("C").unwrap();
        let d = cal.fin_shape("D").unwrap();
        assert_eq!(a.curvature_factor, 1.3);
        assert_eq!(c.curvature_factor, 1.3);
        assert_eq!(a.stiffness, 1.0);
        assert_eq!(b.curvature_factor, 1.0);
        assert_eq!(b.stiffness, 0.6);
        assert_eq!(d.curvature_factor, 1.0);
        assert_eq!(d.stiffness, 1.0);
        // comparable surface areas across designs
        assert_eq!(a.area, b.area);
        assert_eq!(a.area, c.area);
        assert_eq!(a.area, d.area);
    }

    #[test]
    fn unknown_names_are_rejected_with_context() {
        let cal = Calibration::default_embedded();
        let err = cal.media_params("gravel").unwrap_err();
        assert!(err.to_string().contains("gravel"));
        let err = cal.fin_shape("E").unwrap_err();
        assert!(err.to_string().contains("fin"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut doc: serde_json::Value =
            serde_json::from_str(DEFAULT_CALIBRATION_JSON).unwrap();
        doc.as_object_mut().unwrap().insert("tracton_coeff".into(), 0.5.into());
        let err = Calibration::from_json_str(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("tracton_coeff"));
    }

    #[test]
    fn invalid_entries_fail_validation() {
        let mut doc: serde_json::Value =
            serde_json::from_str(DEFAULT_CALIBRATION_JSON).unwrap();
        doc["fins"]["B"]["stiffness"] = serde_json::json!(0.0);
        assert!(Calibration::from_json_str(&doc.to_string()).is_err());
        let mut doc: serde_json::Value =
            serde_json::from_str(DEFAULT_CALIBRATION_JSON).unwrap();
        doc["media"]["poppy"]["slip"] = serde_json::json!(1.0);
        assert!(Calibration::from_json_str(&doc.to_string()).is_err());
    }
}
