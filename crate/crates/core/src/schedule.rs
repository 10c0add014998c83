//! Corruption-rate schedules: ε as a function of diffusion timestep and of
//! training progress.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("timestep {t} outside 1..={timesteps}")]
    TimestepOutOfRange { t: u32, timesteps: u32 },
    #[error("training step {step} outside 0..={total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// ε_t = t / T, clamped to the rate bounds.
    #[serde(alias = "linear")]
    LinearTimestep,
    /// ε ramps from `eps_min` to `eps_max` over training with a half cosine.
    #[serde(alias = "cosine")]
    CosineCurriculum,
    /// ε = `eps_max` everywhere.
    Constant,
}

impl FromStr for ScheduleKind {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" | "linear_timestep" => Ok(ScheduleKind::LinearTimestep),
            "cosine" | "cosine_curriculum" => Ok(ScheduleKind::CosineCurriculum),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(ScheduleError::Invalid(format!("unknown schedule kind {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::LinearTimestep => "linear",
            ScheduleKind::CosineCurriculum => "cosine",
            ScheduleKind::Constant => "constant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// Number of diffusion timesteps T.
    #[serde(default = "default_timesteps")]
    pub timesteps: u32,
    #[serde(default)]
    pub eps_min: f64,
    #[serde(default = "default_eps_max")]
    pub eps_max: f64,
    /// Training-step horizon S of the curriculum.
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    /// Run the curriculum backwards (high noise first).
    #[serde(default)]
    pub reverse: bool,
    /// Multiply the curriculum rate by the timestep rate t/T.
    #[serde(default)]
    pub compose: bool,
}

fn default_timesteps() -> u32 {
    1000
}

fn default_eps_max() -> f64 {
    1.0
}

fn default_total_steps() -> u64 {
    1000
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::linear(default_timesteps())
    }
}

impl Schedule {
    pub fn linear(timesteps: u32) -> Self {
        Schedule {
            kind: ScheduleKind::LinearTimestep,
            timesteps,
            eps_min: 0.0,
            eps_max: 1.0,
            total_steps: default_total_steps(),
            reverse: false,
            compose: false,
        }
    }

    pub fn constant(epsilon: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            eps_min: epsilon,
            eps_max: epsilon,
            ..Schedule::linear(default_timesteps())
        }
    }

    pub fn cosine(eps_min: f64, eps_max: f64, total_steps: u64) -> Self {
        Schedule {
            kind: ScheduleKind::CosineCurriculum,
            eps_min,
            eps_max,
            total_steps,
            ..Schedule::linear(default_timesteps())
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.timesteps < 1 {
            return Err(ScheduleError::Invalid("timesteps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_min)
            || !(0.0..=1.0).contains(&self.eps_max)
            || self.eps_min > self.eps_max
        {
            return Err(ScheduleError::Invalid(format!(
                "need 0 <= eps_min <= eps_max <= 1, got {} and {}",
                self.eps_min, self.eps_max
            )));
        }
        Ok(())
    }

    /// Rate at diffusion timestep `t` ∈ 1..=T. The curriculum kind uses the
    /// linear timestep law here; its training-time ramp is separate.
    pub fn epsilon_at_timestep(&self, t: u32) -> Result<f64, ScheduleError> {
        if t < 1 || t > self.timesteps {
            return Err(ScheduleError::TimestepOutOfRange {
                t,
                timesteps: self.timesteps,
            });
        }
        Ok(match self.kind {
            ScheduleKind::Constant => self.eps_max,
            ScheduleKind::LinearTimestep | ScheduleKind::CosineCurriculum => {
                (f64::from(t) / f64::from(self.timesteps)).clamp(self.eps_min, self.eps_max)
            }
        })
    }

    /// Half-cosine ramp from `eps_min` at step 0 to `eps_max` at step `total`
    /// (reversed when `reverse` is set). A zero horizon counts as finished.
    pub fn epsilon_at_training_step(&self, step: u64, total: u64) -> Result<f64, ScheduleError> {
        if step > total {
            return Err(ScheduleError::StepOutOfRange { step, total });
        }
        let progress = if total == 0 {
            1.0
        } else {
            step as f64 / total as f64
        };
        let mut weight = (1.0 - (PI * progress).cos()) / 2.0;
        if self.reverse {
            weight = 1.0 - weight;
        }
        // endpoint weights are exactly 0 and 1, so the bounds come back bit-exact
        Ok(self.eps_min * (1.0 - weight) + self.eps_max * weight)
    }

    /// The rate actually used to corrupt a sample drawn at timestep `t`
    /// during training step `step` of `self.total_steps`.
    pub fn epsilon(&self, t: u32, step: Option<u64>) -> Result<f64, ScheduleError> {
        match self.kind {
            ScheduleKind::CosineCurriculum => {
                let step = step.unwrap_or(self.total_steps).min(self.total_steps);
                let ramp = self.epsilon_at_training_step(step, self.total_steps)?;
                if self.compose {
                    if t < 1 || t > self.timesteps {
                        return Err(ScheduleError::TimestepOutOfRange {
                            t,
                            timesteps: self.timesteps,
                        });
                    }
                    Ok(ramp * f64::from(t) / f64::from(self.timesteps))
                } else {
                    Ok(ramp)
                }
            }
            _ => self.epsilon_at_timestep(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_endpoints_and_midpoint() {
        let s = Schedule::linear(1000);
        assert_eq!(s.epsilon_at_timestep(1000).unwrap(), 1.0);
        assert_eq!(s.epsilon_at_timestep(500).unwrap(), 0.5);
        assert_eq!(s.epsilon_at_timestep(1).unwrap(), 0.001);
        assert!(matches!(
            s.epsilon_at_timestep(0),
            Err(ScheduleError::TimestepOutOfRange { .. })
        ));
        assert!(s.epsilon_at_timestep(1001).is_err());
    }

    #[test]
    fn linear_clamps_to_bounds() {
        let s = Schedule {
            eps_min: 0.2,
            eps_max: 0.8,
            ..Schedule::linear(10)
        };
        assert_eq!(s.epsilon_at_timestep(1).unwrap(), 0.2);
        assert_eq!(s.epsilon_at_timestep(10).unwrap(), 0.8);
    }

    #[test]
    fn constant_ignores_timestep() {
        let s = Schedule::constant(0.3);
        for t in [1, 17, 1000] {
            assert_eq!(s.epsilon_at_timestep(t).unwrap(), 0.3);
        }
    }

    #[test]
    fn cosine_curriculum_endpoints() {
        let s = Schedule::cosine(0.1, 0.9, 100);
        assert_eq!(s.epsilon_at_training_step(0, 100).unwrap(), 0.1);
        assert_eq!(s.epsilon_at_training_step(100, 100).unwrap(), 0.9);
        assert!((s.epsilon_at_training_step(50, 100).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            s.epsilon_at_training_step(101, 100),
            Err(ScheduleError::StepOutOfRange { .. })
        ));
        let mut prev = 0.0;
        for step in 0..=100 {
            let e = s.epsilon_at_training_step(step, 100).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn reverse_decays() {
        let s = Schedule {
            reverse: true,
            ..Schedule::cosine(0.1, 0.9, 10)
        };
        assert_eq!(s.epsilon_at_training_step(0, 10).unwrap(), 0.9);
        assert_eq!(s.epsilon_at_training_step(10, 10).unwrap(), 0.1);
    }

    #[test]
    fn compose_multiplies_by_timestep_rate() {
        let s = Schedule {
            compose: true,
            timesteps: 4,
            ..Schedule::cosine(0.2, 0.6, 10)
        };
        assert!((s.epsilon(2, Some(10)).unwrap() - 0.3).abs() < 1e-12);
        let plain = Schedule {
            timesteps: 4,
            ..Schedule::cosine(0.2, 0.6, 10)
        };
        assert_eq!(plain.epsilon(2, Some(0)).unwrap(), 0.2);
    }

    #[test]
    fn validation() {
        assert!(Schedule::constant(1.5).validate().is_err());
        assert!(Schedule::cosine(0.6, 0.2, 10).validate().is_err());
        assert!(Schedule::linear(0).validate().is_err());
        assert!(Schedule::cosine(0.1, 0.9, 10).validate().is_ok());
    }
}
