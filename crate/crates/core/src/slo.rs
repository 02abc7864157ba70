//! SLO profiles and the linear per-query reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::OutcomeFlags;

#[derive(Debug, Error, PartialEq)]
pub enum SloError {
    #[error("profile {profile}: {field} must be finite and >= 0 (got {value})")]
    BadWeight { profile: String, field: &'static str, value: f64 },
    #[error("profile {profile}: cost_scale must be finite and > 0 (got {value})")]
    BadScale { profile: String, value: f64 },
    #[error("unknown SLO profile {0:?}")]
    Unknown(String),
}

fn one() -> f64 {
    1.0
}

/// Weights of `w_acc*acc - w_cost*cost/cost_scale - w_hall*hall + w_ref*ref`.
///
/// `ref_correct` and `ref_incorrect` scale the +1 and -1 sides of the refusal
/// term; both default to 1 (symmetric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloProfile {
    pub name: String,
    pub w_acc: f64,
    pub w_cost: f64,
    pub w_hall: f64,
    pub w_ref: f64,
    pub cost_scale: f64,
    #[serde(default = "one")]
    pub ref_correct: f64,
    #[serde(default = "one")]
    pub ref_incorrect: f64,
}

impl SloProfile {
    pub fn new(name: &str, w_acc: f64, w_cost: f64, w_hall: f64, w_ref: f64) -> Self {
        Self {
            name: name.to_string(),
            w_acc,
            w_cost,
            w_hall,
            w_ref,
            cost_scale: 1000.0,
            ref_correct: 1.0,
            ref_incorrect: 1.0,
        }
    }

    pub fn quality_first() -> Self {
        Self::new("quality_first", 1.0, 0.1, 1.0, 0.5)
    }

    pub fn cheap() -> Self {
        Self::new("cheap", 0.5, 1.0, 0.5, 0.5)
    }

    pub fn validate(&self) -> Result<(), SloError> {
        let weights = [
            ("w_acc", self.w_acc),
            ("w_cost", self.w_cost),
            ("w_hall", self.w_hall),
            ("w_ref", self.w_ref),
            ("ref_correct", self.ref_correct),
            ("ref_incorrect", self.ref_incorrect),
        ];
        for (field, value) in weights {
            if !value.is_finite() || value < 0.0 {
                return Err(SloError::BadWeight { profile: self.name.clone(), field, value });
            }
        }
        if !self.cost_scale.is_finite() || self.cost_scale <= 0.0 {
            return Err(SloError::BadScale { profile: self.name.clone(), value: self.cost_scale });
        }
        Ok(())
    }
}

pub fn compute_reward(flags: &OutcomeFlags, profile: &SloProfile) -> f64 {
    let acc = if flags.acc { 1.0 } else { 0.0 };
    let hall = if flags.hall { 1.0 } else { 0.0 };
    let refusal = match flags.refusal_correct {
        1 => profile.ref_correct,
        -1 => -profile.ref_incorrect,
        _ => 0.0,
    };
    profile.w_acc * acc - profile.w_cost * (flags.cost_tokens as f64 / profile.cost_scale) - profile.w_hall * hall
        + profile.w_ref * refusal
}

/// The two built-in profiles, with `overrides` replacing by name or appended.
pub fn builtin_profiles(overrides: &[SloProfile]) -> Result<Vec<SloProfile>, SloError> {
    let mut profiles = vec![SloProfile::quality_first(), SloProfile::cheap()];
    for p in overrides {
        p.validate()?;
        match profiles.iter_mut().find(|q| q.name == p.name) {
            Some(slot) => *slot = p.clone(),
            None => profiles.push(p.clone()),
        }
    }
    Ok(profiles)
}

pub fn find_profile<'a>(profiles: &'a [SloProfile], name: &str) -> Result<&'a SloProfile, SloError> {
    profiles
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| SloError::Unknown(name.to_string()))
}
