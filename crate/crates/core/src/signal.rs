//! Transmitter model: DC bias, per-LED amplitude and optical limits, the
//! electrical power budget and the rate-bound constant of each stream.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scenario::{LedParams, Scenario};

/// Rate-bound constant `e^{1 + 2(α + γ ε)}` of an amplitude-limited stream.
pub fn tau(alpha: f64, gamma: f64, eps_sig: f64) -> f64 {
    (1.0 + 2.0 * (alpha + gamma * eps_sig)).exp()
}

/// Per-LED DC bias fixed by the dimming level.
pub fn dc_bias(led: &LedParams, n_leds: usize) -> f64 {
    led.dc_bias_override
        .unwrap_or(led.dimming_level * led.max_optical_power / n_leds as f64)
}

/// Room left between the bias and the nearer current limit, without the
/// feasibility check. Negative when the bias lies outside `[I_L, I_H]`.
pub fn raw_optical_headroom(led: &LedParams, n_leds: usize) -> f64 {
    let b = dc_bias(led, n_leds);
    (b - led.current_low).min(led.current_high - b)
}

/// Largest signed signal swing a single LED may add on top of its bias.
pub fn optical_headroom(led: &LedParams, n_leds: usize) -> Result<f64> {
    let h = raw_optical_headroom(led, n_leds);
    if h < 0.0 {
        return Err(Error::Infeasible(format!(
            "DC bias {} lies outside the current range [{}, {}]",
            dc_bias(led, n_leds),
            led.current_low,
            led.current_high
        )));
    }
    Ok(h)
}

/// Amplitude, variance and rate constant of each of the K+1 streams
/// (index 0 is the common stream).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamParams {
    pub amplitude: Vec<f64>,
    pub variance: Vec<f64>,
    pub tau: Vec<f64>,
}

impl StreamParams {
    pub fn uniform(led: &LedParams, streams: usize) -> Self {
        let t = tau(led.dist_alpha, led.dist_gamma, led.signal_variance);
        Self {
            amplitude: vec![led.peak_amplitude; streams],
            variance: vec![led.signal_variance; streams],
            tau: vec![t; streams],
        }
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self::uniform(&scenario.led, scenario.num_users() + 1)
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }
}

/// Common precoder `p_0`, private precoders `p_1..p_K` and the DC bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub streams: Vec<DVector<f64>>,
    pub bias: f64,
}

impl BeamformerSet {
    pub fn zeros(n_leds: usize, n_users: usize, bias: f64) -> Self {
        Self {
            streams: vec![DVector::zeros(n_leds); n_users + 1],
            bias,
        }
    }

    pub fn common(&self) -> &DVector<f64> {
        &self.streams[0]
    }

    pub fn private(&self, k: usize) -> &DVector<f64> {
        &self.streams[k + 1]
    }

    pub fn num_users(&self) -> usize {
        self.streams.len() - 1
    }

    pub fn num_leds(&self) -> usize {
        self.streams[0].len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            streams: self.streams.iter().map(|p| p * s).collect(),
            bias: self.bias,
        }
    }
}

/// Slack of every transmit-side constraint; negative slack is a violation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// `b − Σ_i A_i |p_{i,n}|` per LED.
    pub amplitude: Vec<f64>,
    /// `headroom − Σ_i A_i p_{i,n}` per LED.
    pub optical: Vec<f64>,
    /// `Σ_i A_i p_{i,n} + b − I_L` per LED.
    pub current_floor: Vec<f64>,
    /// `P_t − Σ_i ‖p_i‖² ε_i`.
    pub power: f64,
    pub tolerance: f64,
}

impl ConstraintReport {
    pub fn amplitude_ok(&self) -> bool {
        self.amplitude.iter().all(|s| *s >= -self.tolerance)
    }

    pub fn optical_ok(&self) -> bool {
        self.optical.iter().all(|s| *s >= -self.tolerance)
    }

    pub fn current_floor_ok(&self) -> bool {
        self.current_floor.iter().all(|s| *s >= -self.tolerance)
    }

    pub fn power_ok(&self) -> bool {
        self.power >= -self.tolerance
    }

    /// Amplitude, optical and power constraints all hold.
    pub fn satisfied(&self) -> bool {
        self.amplitude_ok() && self.optical_ok() && self.power_ok()
    }

    pub fn min_slack(&self) -> f64 {
        self.amplitude
            .iter()
            .chain(&self.optical)
            .copied()
            .fold(self.power, f64::min)
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Evaluates the transmit constraints. Never fails: violations show up as
/// negative slack.
pub fn check_feasible(beams: &BeamformerSet, scenario: &Scenario) -> ConstraintReport {
    let params = StreamParams::for_scenario(scenario);
    check_with(beams, scenario, &params, DEFAULT_TOLERANCE)
}

pub fn check_with(
    beams: &BeamformerSet,
    scenario: &Scenario,
    params: &StreamParams,
    tolerance: f64,
) -> ConstraintReport {
    let n = beams.num_leds();
    let headroom = raw_optical_headroom(&scenario.led, scenario.num_leds());
    let mut amplitude = Vec::with_capacity(n);
    let mut optical = Vec::with_capacity(n);
    let mut current_floor = Vec::with_capacity(n);
    for led in 0..n {
        let mut abs_sum = 0.0;
        let mut signed_sum = 0.0;
        for (p, a) in beams.streams.iter().zip(&params.amplitude) {
            abs_sum += a * p[led].abs();
            signed_sum += a * p[led];
        }
        amplitude.push(beams.bias - abs_sum);
        optical.push(headroom - signed_sum);
        current_floor.push(signed_sum + beams.bias - scenario.led.current_low);
    }
    let used: f64 = beams
        .streams
        .iter()
        .zip(&params.variance)
        .map(|(p, e)| p.norm_squared() * e)
        .sum();
    ConstraintReport {
        amplitude,
        optical,
        current_floor,
        power: scenario.transmit_power - used,
        tolerance,
    }
}
