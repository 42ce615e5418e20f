//! Simulation scenarios: room geometry, LED and solar-panel parameters, and
//! the power, dimming and energy limits of one downlink deployment.
//!
//! Scenarios are loaded from TOML. Every key is optional; anything missing is
//! taken from [`default_scenario`]. Units are SI throughout (meters, watts,
//! amps, volts, degrees) except `noise_power_dbm`, which is converted to watts
//! when the file is read.
//!
//! ```toml
//! room_dims = [3.0, 3.0, 5.0]
//! user_positions = [[1.0, 1.0, 1.7], [2.0, 2.0, 1.7]]
//! noise_power_dbm = -98.82      # or `noise_power` in watts
//! transmit_power = 31.62
//! energy_threshold = 0.004
//!
//! [led]
//! current_low = 10.0
//! current_high = 15.0
//!
//! [panel.harvester]
//! gamma = 0.001
//! ```
//!
//! Signal-domain quantities (peak amplitude, LED currents, DC bias, precoder
//! entries) are all treated as the same drive-signal unit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Receiving-plane height used by the reference deployment.
pub const USER_HEIGHT: f64 = 1.7;

/// Reference LED layout: eight ceiling fixtures at 4.5 m.
pub const REFERENCE_LEDS: [Point3; 8] = [
    [0.5, 2.5, 4.5],
    [2.5, 0.5, 4.5],
    [0.5, 0.5, 4.5],
    [2.5, 2.5, 4.5],
    [0.5, 1.5, 4.5],
    [2.5, 1.5, 4.5],
    [1.5, 0.5, 4.5],
    [1.5, 2.5, 4.5],
];

/// Fixed positions of the three default users in the receiving plane.
pub const REFERENCE_USERS: [Point3; 3] = [
    [0.8, 0.9, USER_HEIGHT],
    [2.2, 1.2, USER_HEIGHT],
    [1.4, 2.3, USER_HEIGHT],
];

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedParams {
    /// Half-power emission semi-angle, degrees.
    pub semi_angle_deg: f64,
    /// Peak amplitude A of every stream.
    pub peak_amplitude: f64,
    /// Variance of every stream.
    pub signal_variance: f64,
    /// Distribution parameters of the amplitude-limited input signal.
    pub dist_alpha: f64,
    pub dist_gamma: f64,
    pub current_low: f64,
    pub current_high: f64,
    /// Maximum optical power P_o of the whole array, watts.
    pub max_optical_power: f64,
    pub dimming_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_bias_override: Option<f64>,
}

impl Default for LedParams {
    fn default() -> Self {
        Self {
            semi_angle_deg: 60.0,
            peak_amplitude: 2.0,
            signal_variance: 1.0,
            dist_alpha: 0.080_920_195_306_265_5,
            dist_gamma: 0.263_349_965_062_789_4,
            current_low: 10.0,
            current_high: 15.0,
            max_optical_power: 125.0,
            dimming_level: 0.8,
            dc_bias_override: None,
        }
    }
}

/// Constants of the solar-panel harvesting model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvesterConsts {
    pub pi: f64,
    pub gamma: f64,
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub z: f64,
    pub e_a: f64,
}

impl Default for HarvesterConsts {
    fn default() -> Self {
        Self {
            pi: 1.0,
            gamma: 1e-3,
            mu: std::f64::consts::E * std::f64::consts::E,
            kappa: 1.0,
            a: 1.0,
            z: 0.0,
            e_a: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelParams {
    pub fov_deg: f64,
    pub refractive_index: f64,
    /// Detector area A_s, m².
    pub detector_area: f64,
    /// Light-to-current conversion efficiency, A/W.
    pub resp_l: f64,
    /// Reverse conversion efficiency; a pure scale on every gain.
    pub resp_c: f64,
    pub harvester: HarvesterConsts,
}

impl Default for PanelParams {
    fn default() -> Self {
        Self {
            fov_deg: 60.0,
            refractive_index: 1.5,
            detector_area: 10e-4,
            resp_l: 0.54,
            resp_c: 1.0,
            harvester: HarvesterConsts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub room_dims: Point3,
    pub led_positions: Vec<Point3>,
    pub user_positions: Vec<Point3>,
    pub led: LedParams,
    pub panel: PanelParams,
    /// Receiver noise power σ², watts.
    pub noise_power: f64,
    /// Electrical transmit power budget P_t.
    pub transmit_power: f64,
    /// Minimum harvested power per user E_th, watts.
    pub energy_threshold: f64,
    /// Power that corresponds to 0 dB transmit SNR.
    pub snr_reference_power: f64,
}

/// The reference deployment: a 3×3×5 m room, eight ceiling LEDs, three users
/// at 1.7 m and a 15 dB transmit SNR.
pub fn default_scenario() -> Scenario {
    Scenario {
        room_dims: [3.0, 3.0, 5.0],
        led_positions: REFERENCE_LEDS.to_vec(),
        user_positions: REFERENCE_USERS.to_vec(),
        led: LedParams::default(),
        panel: PanelParams::default(),
        noise_power: dbm_to_watts(-98.82),
        transmit_power: 10f64.powf(1.5),
        energy_threshold: DEFAULT_ENERGY_THRESHOLD,
        snr_reference_power: 1.0,
    }
}

/// Default per-user harvested-power floor, watts. Roughly half of what the
/// weakest default user collects when the bias sits at `current_high`.
pub const DEFAULT_ENERGY_THRESHOLD: f64 = 4e-3;

impl Scenario {
    pub fn num_leds(&self) -> usize {
        self.led_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.transmit_power / self.snr_reference_power).log10()
    }

    /// Sets the transmit budget from a transmit SNR in dB.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.transmit_power = self.snr_reference_power * 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn with_users(mut self, users: Vec<Point3>) -> Self {
        self.user_positions = users;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let led = &self.led;
        let panel = &self.panel;
        let h = &panel.harvester;
        if self.room_dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("room_dims", "every dimension must be positive"));
        }
        if self.led_positions.is_empty() {
            return Err(Error::invalid("led_positions", "at least one LED is required"));
        }
        if self.user_positions.is_empty() {
            return Err(Error::invalid("user_positions", "at least one user is required"));
        }
        let inside = |p: &Point3| {
            p.iter()
                .zip(self.room_dims.iter())
                .all(|(c, d)| c.is_finite() && *c >= 0.0 && *c <= *d)
        };
        if let Some(i) = self.led_positions.iter().position(|p| !inside(p)) {
            return Err(Error::invalid("led_positions", format!("LED {i} lies outside the room")));
        }
        if let Some(k) = self.user_positions.iter().position(|p| !inside(p)) {
            return Err(Error::invalid("user_positions", format!("user {k} lies outside the room")));
        }
        let lowest_led = self
            .led_positions
            .iter()
            .map(|p| p[2])
            .fold(f64::INFINITY, f64::min);
        if let Some(k) = self.user_positions.iter().position(|p| p[2] >= lowest_led) {
            return Err(Error::invalid(
                "user_positions",
                format!("user {k} is not below the LED plane"),
            ));
        }
        if !(led.semi_angle_deg > 0.0 && led.semi_angle_deg < 90.0) {
            return Err(Error::invalid("led.semi_angle_deg", "must lie in (0, 90)"));
        }
        if !(led.peak_amplitude > 0.0) {
            return Err(Error::invalid("led.peak_amplitude", "must be positive"));
        }
        if !(led.signal_variance > 0.0) {
            return Err(Error::invalid("led.signal_variance", "must be positive"));
        }
        if !(led.dimming_level > 0.0 && led.dimming_level <= 1.0) {
            return Err(Error::invalid("led.dimming_level", "must lie in (0, 1]"));
        }
        if !(led.current_low < led.current_high) {
            return Err(Error::invalid(
                "led.current_low/current_high",
                format!(
                    "current bounds need current_low < current_high, got [{}, {}]",
                    led.current_low, led.current_high
                ),
            ));
        }
        if !(led.max_optical_power > 0.0) {
            return Err(Error::invalid("led.max_optical_power", "must be positive"));
        }
        if matches!(led.dc_bias_override, Some(b) if !(b >= 0.0)) {
            return Err(Error::invalid("led.dc_bias_override", "must be non-negative"));
        }
        if !(panel.fov_deg > 0.0 && panel.fov_deg <= 90.0) {
            return Err(Error::invalid("panel.fov_deg", "must lie in (0, 90]"));
        }
        if !(panel.detector_area > 0.0) {
            return Err(Error::invalid("panel.detector_area", "must be positive"));
        }
        if !(panel.refractive_index > 0.0) {
            return Err(Error::invalid("panel.refractive_index", "must be positive"));
        }
        if !(h.mu > 1.0) {
            return Err(Error::invalid("panel.harvester.mu", "must exceed 1"));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::invalid("noise_power", "must be positive"));
        }
        if !(self.transmit_power > 0.0) {
            return Err(Error::invalid("transmit_power", "must be positive"));
        }
        if !(self.energy_threshold >= 0.0) {
            return Err(Error::invalid("energy_threshold", "must be non-negative"));
        }
        if !(self.snr_reference_power > 0.0) {
            return Err(Error::invalid("snr_reference_power", "must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always serializable")
    }
}

/// Partial scenario as it appears on disk; absent keys take default values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    room_dims: Option<Point3>,
    led_positions: Option<Vec<Point3>>,
    user_positions: Option<Vec<Point3>>,
    led: Option<LedFile>,
    panel: Option<PanelFile>,
    noise_power: Option<f64>,
    noise_power_dbm: Option<f64>,
    transmit_power: Option<f64>,
    transmit_snr_db: Option<f64>,
    energy_threshold: Option<f64>,
    snr_reference_power: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LedFile {
    semi_angle_deg: Option<f64>,
    peak_amplitude: Option<f64>,
    signal_variance: Option<f64>,
    dist_alpha: Option<f64>,
    dist_gamma: Option<f64>,
    current_low: Option<f64>,
    current_high: Option<f64>,
    max_optical_power: Option<f64>,
    dimming_level: Option<f64>,
    dc_bias_override: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PanelFile {
    fov_deg: Option<f64>,
    refractive_index: Option<f64>,
    detector_area: Option<f64>,
    resp_l: Option<f64>,
    resp_c: Option<f64>,
    harvester: Option<HarvesterFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HarvesterFile {
    pi: Option<f64>,
    gamma: Option<f64>,
    mu: Option<f64>,
    kappa: Option<f64>,
    a: Option<f64>,
    z: Option<f64>,
    e_a: Option<f64>,
}

fn merge<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let mut s = default_scenario();
        merge(&mut s.room_dims, self.room_dims);
        merge(&mut s.led_positions, self.led_positions);
        merge(&mut s.user_positions, self.user_positions);
        if let Some(led) = self.led {
            let l = &mut s.led;
            merge(&mut l.semi_angle_deg, led.semi_angle_deg);
            merge(&mut l.peak_amplitude, led.peak_amplitude);
            merge(&mut l.signal_variance, led.signal_variance);
            merge(&mut l.dist_alpha, led.dist_alpha);
            merge(&mut l.dist_gamma, led.dist_gamma);
            merge(&mut l.current_low, led.current_low);
            merge(&mut l.current_high, led.current_high);
            merge(&mut l.max_optical_power, led.max_optical_power);
            merge(&mut l.dimming_level, led.dimming_level);
            if led.dc_bias_override.is_some() {
                l.dc_bias_override = led.dc_bias_override;
            }
        }
        if let Some(panel) = self.panel {
            let p = &mut s.panel;
            merge(&mut p.fov_deg, panel.fov_deg);
            merge(&mut p.refractive_index, panel.refractive_index);
            merge(&mut p.detector_area, panel.detector_area);
            merge(&mut p.resp_l, panel.resp_l);
            merge(&mut p.resp_c, panel.resp_c);
            if let Some(h) = panel.harvester {
                let c = &mut p.harvester;
                merge(&mut c.pi, h.pi);
                merge(&mut c.gamma, h.gamma);
                merge(&mut c.mu, h.mu);
                merge(&mut c.kappa, h.kappa);
                merge(&mut c.a, h.a);
                merge(&mut c.z, h.z);
                merge(&mut c.e_a, h.e_a);
            }
        }
        match (self.noise_power, self.noise_power_dbm) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "noise_power",
                    "give either noise_power or noise_power_dbm, not both",
                ))
            }
            (Some(w), None) => s.noise_power = w,
            (None, Some(dbm)) => s.noise_power = dbm_to_watts(dbm),
            (None, None) => {}
        }
        merge(&mut s.snr_reference_power, self.snr_reference_power);
        match (self.transmit_power, self.transmit_snr_db) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "transmit_power",
                    "give either transmit_power or transmit_snr_db, not both",
                ))
            }
            (Some(p), None) => s.transmit_power = p,
            (None, Some(db)) => s = s.with_snr_db(db),
            (None, None) => {}
        }
        merge(&mut s.energy_threshold, self.energy_threshold);
        s.validate()?;
        Ok(s)
    }
}

/// Parses a scenario from TOML text, filling gaps from the defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Replaces the users with `count` positions drawn uniformly over the room
/// footprint at [`USER_HEIGHT`].
pub fn sample_users(scenario: &Scenario, count: usize, seed: u64) -> Scenario {
    assert!(count >= 1, "at least one user must be sampled");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [dx, dy, _] = scenario.room_dims;
    let users = (0..count)
        .map(|_| [rng.gen_range(0.0..=dx), rng.gen_range(0.0..=dy), USER_HEIGHT])
        .collect();
    scenario.clone().with_users(users)
}
