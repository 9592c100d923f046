use std::f64::consts::PI;

use serde::Serialize;

use super::config::ScheduleConfig;
use crate::numerics::QuantizerMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    Noise,
    SoftRound,
    HardRound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub iterations: usize,
}

/// Settings for one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub phase: usize,
    /// Iteration within the phase.
    pub local: usize,
    pub mode: QuantizerMode,
    pub lr: f64,
}

/// Additive noise (linear amplitude decay), then soft rounding (cosine
/// temperature decay), then hard rounding. The learning rate follows a
/// cosine decay restarted at every phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
    #[serde(skip)]
    cfg: ScheduleConfig,
}

fn cosine(start: f64, end: f64, t: f64) -> f64 {
    end + (start - end) * 0.5 * (1.0 + (PI * t).cos())
}

impl Schedule {
    pub fn new(total: usize, cfg: &ScheduleConfig) -> Self {
        // at least one hard-rounding step
        let soft_total = total.saturating_sub(1);
        let a = ((total as f64 * cfg.noise_fraction).round() as usize).min(soft_total);
        let b = ((total as f64 * cfg.softround_fraction).round() as usize).min(soft_total - a);
        let phases = [(PhaseKind::Noise, a), (PhaseKind::SoftRound, b), (PhaseKind::HardRound, total - a - b)]
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(kind, iterations)| Phase { kind, iterations })
            .collect();
        Schedule { phases, cfg: cfg.clone() }
    }

    pub fn total(&self) -> usize {
        self.phases.iter().map(|p| p.iterations).sum()
    }

    pub fn checkpoint_every(&self) -> usize {
        self.cfg.checkpoint_every
    }

    /// Settings at global iteration `it` (`it < total`).
    pub fn at(&self, it: usize) -> Step {
        let mut local = it;
        for (phase, p) in self.phases.iter().enumerate() {
            if local < p.iterations {
                let t = if p.iterations > 1 { local as f64 / (p.iterations - 1) as f64 } else { 1.0 };
                let c = &self.cfg;
                let mode = match p.kind {
                    PhaseKind::Noise => QuantizerMode::AdditiveNoise(c.noise_start + (c.noise_end - c.noise_start) * t),
                    PhaseKind::SoftRound => {
                        QuantizerMode::SoftRound(cosine(c.temperature_start, c.temperature_end, t))
                    }
                    PhaseKind::HardRound => QuantizerMode::HardRoundSte,
                };
                let lr = cosine(c.lr_start, c.lr_end, local as f64 / p.iterations as f64);
                return Step { phase, local, mode, lr };
            }
            local -= p.iterations;
        }
        panic!("iteration {it} beyond schedule of {}", self.total());
    }
}
