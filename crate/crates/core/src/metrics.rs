//! MTTR decomposition (detect + diagnose + fix) and the projected effect of
//! shortening the diagnosis phase. All durations are minutes.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RangeError {
    #[error("{name} must be a finite value in [0, 1], got {value}")]
    Ratio { name: &'static str, value: f64 },
    #[error("{name} must be a finite duration >= 0, got {value}")]
    Duration { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MttrModel {
    pub t_detect: f64,
    pub t_diagnose: f64,
    pub t_fix: f64,
}

impl MttrModel {
    pub fn new(t_detect: f64, t_diagnose: f64, t_fix: f64) -> Result<Self, RangeError> {
        let m = Self { t_detect, t_diagnose, t_fix };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), RangeError> {
        for (name, value) in [("t_detect", self.t_detect), ("t_diagnose", self.t_diagnose), ("t_fix", self.t_fix)] {
            if !value.is_finite() || value < 0.0 {
                return Err(RangeError::Duration { name, value });
            }
        }
        Ok(())
    }
}

impl std::ops::Add for MttrModel {
    type Output = MttrModel;

    fn add(self, o: MttrModel) -> MttrModel {
        MttrModel {
            t_detect: self.t_detect + o.t_detect,
            t_diagnose: self.t_diagnose + o.t_diagnose,
            t_fix: self.t_fix + o.t_fix,
        }
    }
}

pub fn mttr_total(m: &MttrModel) -> f64 {
    m.t_detect + m.t_diagnose + m.t_fix
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub total_mttr: f64,
    /// Diagnosis time the reduction applies to.
    pub effective_diagnose: f64,
    pub projected_mttr: f64,
    pub absolute_saving: f64,
    pub relative_saving: f64,
}

fn check_ratio(name: &'static str, value: f64) -> Result<(), RangeError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(RangeError::Ratio { name, value })
    }
}

/// Projects MTTR after cutting diagnosis time by `reduction`. A supplied
/// `diagnose_fraction` replaces the model's diagnosis time with that share
/// of the total.
pub fn project_reduction(
    m: &MttrModel,
    diagnose_fraction: Option<f64>,
    reduction: f64,
) -> Result<Projection, RangeError> {
    m.validate()?;
    check_ratio("reduction", reduction)?;
    if let Some(f) = diagnose_fraction {
        check_ratio("diagnose_fraction", f)?;
    }
    let total = mttr_total(m);
    let effective = diagnose_fraction.map_or(m.t_diagnose, |f| f * total);
    let projected = total - effective * reduction;
    let absolute = total - projected;
    let relative = if total == 0.0 { 0.0 } else { absolute / total };
    Ok(Projection {
        total_mttr: total,
        effective_diagnose: effective,
        projected_mttr: projected,
        absolute_saving: absolute,
        relative_saving: relative,
    })
}

/// Plain-text table for reports; values are labelled as projections.
pub fn render_projection(p: &Projection) -> String {
    format!(
        "{:<28}{:>12.4}\n{:<28}{:>12.4}\n{:<28}{:>12.4}\n{:<28}{:>12.4}\n{:<28}{:>11.2}%\n",
        "current MTTR (min)",
        p.total_mttr,
        "diagnosis time (min)",
        p.effective_diagnose,
        "projected MTTR (min)",
        p.projected_mttr,
        "projected saving (min)",
        p.absolute_saving,
        "projected saving",
        p.relative_saving * 100.0,
    )
}
