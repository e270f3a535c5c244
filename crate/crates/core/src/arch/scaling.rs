use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DetectorArchitecture, ReferenceTable};
use crate::error::{Error, Result};

/// Channel counts are rounded to multiples of this.
pub const CHANNEL_GRANULARITY: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleLabel {
    Nano,
    Small,
    Medium,
}

impl ScaleLabel {
    pub const ALL: [ScaleLabel; 3] = [ScaleLabel::Nano, ScaleLabel::Small, ScaleLabel::Medium];

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleLabel::Nano => "nano",
            ScaleLabel::Small => "small",
            ScaleLabel::Medium => "medium",
        }
    }

    pub fn short(self) -> char {
        match self {
            ScaleLabel::Nano => 'n',
            ScaleLabel::Small => 's',
            ScaleLabel::Medium => 'm',
        }
    }
}

impl fmt::Display for ScaleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScaleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nano" | "n" => Ok(ScaleLabel::Nano),
            "small" | "s" => Ok(ScaleLabel::Small),
            "medium" | "m" => Ok(ScaleLabel::Medium),
            _ => Err(Error::Config(format!("unknown scale label `{s}`"))),
        }
    }
}

/// Width and depth multipliers for one deployment variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactor {
    pub label: ScaleLabel,
    pub width_mult: f64,
    pub depth_mult: f64,
}

impl ScalingFactor {
    pub fn new(label: ScaleLabel, width_mult: f64, depth_mult: f64) -> Result<Self> {
        let f = ScalingFactor {
            label,
            width_mult,
            depth_mult,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.width_mult) || !ok(self.depth_mult) {
            return Err(Error::Config(format!(
                "{} multipliers must be positive and finite",
                self.label
            )));
        }
        Ok(())
    }

    pub fn default_for(label: ScaleLabel) -> Self {
        let (w, d) = match label {
            ScaleLabel::Nano => (1.0, 1.0),
            ScaleLabel::Small => (1.6, 1.33),
            ScaleLabel::Medium => (2.2, 1.67),
        };
        ScalingFactor {
            label,
            width_mult: w,
            depth_mult: d,
        }
    }

    /// Checks that a nano/small/medium family is ordered component-wise.
    pub fn validate_family(family: &[ScalingFactor]) -> Result<()> {
        for f in family {
            f.validate()?;
        }
        let mut sorted = family.to_vec();
        sorted.sort_by_key(|f| f.label);
        for w in sorted.windows(2) {
            if w[0].width_mult > w[1].width_mult || w[0].depth_mult > w[1].depth_mult {
                return Err(Error::Config(format!(
                    "{} factors exceed {} factors",
                    w[0].label, w[1].label
                )));
            }
        }
        Ok(())
    }
}

/// A base architecture expanded by a scaling factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledDetector {
    #[serde(flatten)]
    pub base: DetectorArchitecture,
    pub factor: ScalingFactor,
    pub derived_channels: Vec<u32>,
    pub derived_repeats: Vec<u32>,
}

impl ScaledDetector {
    pub fn total_cost(&self) -> f64 {
        ReferenceTable::cost_with(&self.base, &self.derived_channels, &self.derived_repeats)
    }
}

fn round_channels(x: f64) -> u32 {
    let g = CHANNEL_GRANULARITY as f64;
    ((x / g).round() * g).max(g) as u32
}

/// Applies width and depth multipliers to the reference table. Block choices
/// are carried over unchanged.
pub fn scale_architecture(
    base: &DetectorArchitecture,
    factor: ScalingFactor,
    reference: &ReferenceTable,
) -> ScaledDetector {
    let derived_channels = reference
        .channels
        .iter()
        .map(|&c| round_channels(c as f64 * factor.width_mult))
        .collect();
    let derived_repeats = reference
        .repeats
        .iter()
        // the epsilon keeps 3 * (1/3)-style products from rounding up
        .map(|&r| ((r as f64 * factor.depth_mult - 1e-9).ceil() as u32).max(1))
        .collect();
    ScaledDetector {
        base: base.clone(),
        factor,
        derived_channels,
        derived_repeats,
    }
}
