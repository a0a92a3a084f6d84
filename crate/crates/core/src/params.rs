//! Social-force constants and agent body distributions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SFM_DEFAULT: &str = include_str!("../data/sfm_default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfmParams {
    #[serde(default)]
    pub id: String,
    /// Social repulsion strength A (N).
    pub social_strength_n: f64,
    /// Social repulsion range B (m).
    pub social_range_m: f64,
    /// Body compression stiffness k (kg/s^2).
    pub body_stiffness: f64,
    /// Sliding friction coefficient kappa (kg/(m s)).
    pub friction: f64,
    /// Relaxation time tau (s).
    pub relaxation_time_s: f64,
    pub mass_kg: f64,
    pub radius_min_m: f64,
    pub radius_max_m: f64,
    pub desired_speed_min: f64,
    pub desired_speed_max: f64,
    pub max_speed: f64,
    /// Agent-agent and agent-wall interactions beyond this distance are ignored.
    pub cutoff_m: f64,
    /// Below this speed an agent keeps its previous heading.
    pub heading_min_speed: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self::bundled()
    }
}

impl SfmParams {
    /// The checked-in `sfm_default` parameter set.
    pub fn bundled() -> Self {
        Self::from_json_str(SFM_DEFAULT, "sfm_default").expect("bundled params parse")
    }

    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        let mut p: SfmParams = serde_json::from_str(text).map_err(|e| Error::json(context, e))?;
        if p.id.is_empty() {
            p.id = context.to_string();
        }
        p.check(context)?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("params");
        Self::from_json_str(&text, stem)
    }

    fn check(&self, context: &str) -> Result<()> {
        use crate::error::Violation;
        let mut v = Vec::new();
        let positive = [
            ("social_range_m", self.social_range_m),
            ("relaxation_time_s", self.relaxation_time_s),
            ("mass_kg", self.mass_kg),
            ("desired_speed_min", self.desired_speed_min),
            ("max_speed", self.max_speed),
            ("cutoff_m", self.cutoff_m),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                v.push(Violation::new(format!("{context}.{name}"), "must be > 0 and finite"));
            }
        }
        let non_negative = [
            ("social_strength_n", self.social_strength_n),
            ("body_stiffness", self.body_stiffness),
            ("friction", self.friction),
            ("heading_min_speed", self.heading_min_speed),
        ];
        for (name, x) in non_negative {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(Violation::new(format!("{context}.{name}"), "must be >= 0 and finite"));
            }
        }
        if !(0.2 <= self.radius_min_m
            && self.radius_min_m <= self.radius_max_m
            && self.radius_max_m <= 0.35)
        {
            v.push(Violation::new(
                format!("{context}.radius_min_m/radius_max_m"),
                "need 0.2 <= radius_min <= radius_max <= 0.35",
            ));
        }
        if self.desired_speed_max < self.desired_speed_min {
            v.push(Violation::new(
                format!("{context}.desired_speed_max"),
                "must be >= desired_speed_min",
            ));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}
