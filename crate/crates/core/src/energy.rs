//! Solar-panel harvesting model and the time-splitting energy constraint.
//!
//! During the harvesting phase the precoders are switched off and the bias is
//! raised to `I_H`, so the harvested power is `(1 − θ) E_k(0, I_H)`: affine and
//! decreasing in θ. The per-user floor `E_th` is therefore the box constraint
//! `θ ≤ 1 − E_th / E_k(0, I_H)`.

use nalgebra::DVector;

use crate::channel::{channel_matrix, ChannelMatrix};
use crate::error::{Error, Result};
use crate::scenario::{LedParams, PanelParams, Scenario};
use crate::signal::{BeamformerSet, StreamParams};

/// Instantaneous harvested power of a user with channel `h`, watts.
pub fn harvested_energy(
    beams: &BeamformerSet,
    h: &DVector<f64>,
    panel: &PanelParams,
    params: &StreamParams,
) -> f64 {
    let c = &panel.harvester;
    let ac: f64 = beams
        .streams
        .iter()
        .zip(&params.variance)
        .map(|(p, e)| h.dot(p).powi(2) * e)
        .sum();
    let dc = c.kappa / panel.detector_area * h.sum() * (c.a * beams.bias + c.z) + c.e_a;
    c.pi * ac + c.gamma * dc * dc + c.gamma * (c.mu.ln() - 1.0) * dc
}

/// Harvested power with the precoders off and the bias at `current_high`.
pub fn peak_harvest(h: &DVector<f64>, panel: &PanelParams, led: &LedParams) -> f64 {
    let beams = BeamformerSet::zeros(h.len(), 0, led.current_high);
    let params = StreamParams::uniform(led, 1);
    harvested_energy(&beams, h, panel, &params)
}

/// Power harvested over a block whose decoding share is `theta`.
pub fn ts_harvested(theta: f64, h: &DVector<f64>, panel: &PanelParams, led: &LedParams) -> f64 {
    (1.0 - theta) * peak_harvest(h, panel, led)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestReport {
    pub instantaneous: Vec<f64>,
    pub time_split: Vec<f64>,
    pub theta_caps: Vec<f64>,
    pub threshold: f64,
}

impl HarvestReport {
    pub fn new(scenario: &Scenario, channel: &ChannelMatrix, theta: f64) -> Self {
        let instantaneous: Vec<f64> = (0..channel.num_users())
            .map(|k| peak_harvest(&channel.user(k), &scenario.panel, &scenario.led))
            .collect();
        let time_split = instantaneous.iter().map(|e| (1.0 - theta) * e).collect();
        let theta_caps = instantaneous
            .iter()
            .map(|e| user_cap(*e, scenario.energy_threshold))
            .collect();
        Self {
            instantaneous,
            time_split,
            theta_caps,
            threshold: scenario.energy_threshold,
        }
    }

    /// Smallest harvest slack `E_k^TS − E_th`.
    pub fn min_slack(&self) -> f64 {
        self.time_split
            .iter()
            .map(|e| e - self.threshold)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }
}

fn user_cap(peak: f64, threshold: f64) -> f64 {
    if peak > 0.0 {
        1.0 - threshold / peak
    } else if threshold <= 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Largest decoding share compatible with every user's energy floor.
pub fn theta_cap(scenario: &Scenario) -> Result<f64> {
    theta_cap_with(scenario, &channel_matrix(scenario)?)
}

pub fn theta_cap_with(scenario: &Scenario, channel: &ChannelMatrix) -> Result<f64> {
    let mut cap = 1.0f64;
    for k in 0..channel.num_users() {
        let peak = peak_harvest(&channel.user(k), &scenario.panel, &scenario.led);
        let c = user_cap(peak, scenario.energy_threshold);
        if c < 0.0 {
            return Err(Error::Infeasible(format!(
                "user {k} harvests at most {peak:.4e} W, below the floor {:.4e} W",
                scenario.energy_threshold
            )));
        }
        cap = cap.min(c);
    }
    Ok(cap.clamp(0.0, 1.0))
}
