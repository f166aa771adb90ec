//! Learning-rate schedules as pure step → rate functions: fixed,
//! multistep decay, and one-cycle with cosine warmup and annealing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("step {step} outside [0, {total})")]
    StepOutOfRange { step: i64, total: usize },
    #[error("invalid schedule: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Fixed {
        lr: f64,
    },
    Multistep {
        base_lr: f64,
        milestones: Vec<usize>,
        gamma: f64,
    },
    OnecycleCosine {
        max_lr: f64,
        total_steps: usize,
        pct_start: f64,
        div_factor: f64,
        final_div_factor: f64,
    },
}

impl ScheduleSpec {
    pub fn onecycle(max_lr: f64, total_steps: usize) -> Self {
        ScheduleSpec::OnecycleCosine {
            max_lr,
            total_steps,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |msg: &str| Err(ScheduleError::InvalidSpec(msg.into()));
        match self {
            ScheduleSpec::Fixed { lr } => {
                if !(*lr > 0.0) {
                    return bad("lr must be positive");
                }
            }
            ScheduleSpec::Multistep {
                base_lr,
                milestones,
                gamma,
            } => {
                if !(*base_lr > 0.0) || !(*gamma > 0.0) {
                    return bad("rates must be positive");
                }
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("milestones must be strictly increasing");
                }
            }
            ScheduleSpec::OnecycleCosine {
                max_lr,
                total_steps,
                pct_start,
                div_factor,
                final_div_factor,
            } => {
                if !(*max_lr > 0.0) || !(*div_factor > 0.0) || !(*final_div_factor > 0.0) {
                    return bad("rates and divisors must be positive");
                }
                if !(*pct_start > 0.0 && *pct_start < 1.0) {
                    return bad("pct_start must lie in (0,1)");
                }
                if *total_steps < 2 {
                    return bad("total_steps must be at least 2");
                }
            }
        }
        Ok(())
    }
}

fn cosine(start: f64, end: f64, tau: f64) -> f64 {
    end + (start - end) * (1.0 + (std::f64::consts::PI * tau).cos()) / 2.0
}

/// Learning rate at a step. Fixed/multistep accept any step ≥ 0;
/// one-cycle requires 0 ≤ step < total_steps.
pub fn lr_at(spec: &ScheduleSpec, step: usize) -> Result<f64, ScheduleError> {
    spec.validate()?;
    match spec {
        ScheduleSpec::Fixed { lr } => Ok(*lr),
        ScheduleSpec::Multistep {
            base_lr,
            milestones,
            gamma,
        } => {
            let hits = milestones.iter().filter(|&&m| m <= step).count() as i32;
            Ok(base_lr * gamma.powi(hits))
        }
        ScheduleSpec::OnecycleCosine {
            max_lr,
            total_steps,
            pct_start,
            div_factor,
            final_div_factor,
        } => {
            if step >= *total_steps {
                return Err(ScheduleError::StepOutOfRange {
                    step: step as i64,
                    total: *total_steps,
                });
            }
            let warm = (pct_start * *total_steps as f64).round() as usize;
            if step < warm {
                // cosine rise from max_lr/div_factor to max_lr
                let tau = step as f64 / warm as f64;
                Ok(cosine(max_lr / div_factor, *max_lr, tau))
            } else {
                let span = (*total_steps - 1 - warm).max(1) as f64;
                let tau = (step - warm) as f64 / span;
                Ok(cosine(*max_lr, max_lr / final_div_factor, tau))
            }
        }
    }
}
