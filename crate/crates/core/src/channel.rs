//! Line-of-sight Lambertian channel between ceiling LEDs and solar-panel
//! receivers. LEDs face straight down and panels face straight up, so the
//! radiance and incidence angles of a link coincide.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{LedParams, PanelParams, Point3, Scenario};

/// Lambertian order of an LED with the given half-power semi-angle.
pub fn lambertian_order(semi_angle_deg: f64) -> Result<f64> {
    let c = semi_angle_deg.to_radians().cos();
    if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) {
        return Err(Error::Domain(format!(
            "semi-angle {semi_angle_deg}° has no Lambertian order"
        )));
    }
    Ok(-std::f64::consts::LN_2 / c.ln())
}

/// Effective collection area of a panel behind its concentrator, m².
pub fn effective_area(panel: &PanelParams) -> f64 {
    let s = panel.fov_deg.to_radians().sin();
    panel.refractive_index.powi(2) / (s * s) * panel.detector_area
}

/// DC gain of one LED-to-panel link.
pub fn channel_gain(
    led_pos: &Point3,
    user_pos: &Point3,
    led: &LedParams,
    panel: &PanelParams,
) -> Result<f64> {
    let delta = [
        led_pos[0] - user_pos[0],
        led_pos[1] - user_pos[1],
        led_pos[2] - user_pos[2],
    ];
    let d2: f64 = delta.iter().map(|x| x * x).sum();
    if d2 == 0.0 {
        return Err(Error::DegenerateGeometry(
            "LED and receiver coincide".to_string(),
        ));
    }
    let d = d2.sqrt();
    let cos_angle = delta[2] / d;
    if cos_angle <= 0.0 {
        return Ok(0.0);
    }
    if cos_angle.acos() > panel.fov_deg.to_radians() {
        return Ok(0.0);
    }
    let order = lambertian_order(led.semi_angle_deg)?;
    let scale = (order + 1.0) * panel.resp_l * panel.resp_c * effective_area(panel)
        / (2.0 * std::f64::consts::PI * d2);
    Ok(scale * cos_angle.powf(order) * cos_angle)
}

/// Gains of every (user, LED) pair plus the per-user Gram matrices `h_k h_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// K×N, row k is the channel vector of user k.
    pub gains: DMatrix<f64>,
    pub grams: Vec<DMatrix<f64>>,
}

impl ChannelMatrix {
    pub fn from_gains(gains: DMatrix<f64>) -> Self {
        let grams = (0..gains.nrows())
            .map(|k| {
                let h = gains.row(k).transpose();
                &h * h.transpose()
            })
            .collect();
        Self { gains, grams }
    }

    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_leds(&self) -> usize {
        self.gains.ncols()
    }

    pub fn user(&self, k: usize) -> DVector<f64> {
        self.gains.row(k).transpose()
    }

    /// One CSV row per user, one column per LED.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.num_leds()).map(|n| format!("led{n}")).collect();
        writeln!(out, "user,{}", header.join(","))?;
        for k in 0..self.num_users() {
            let row: Vec<String> = self.gains.row(k).iter().map(|g| format!("{g:e}")).collect();
            writeln!(out, "{k},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn channel_matrix(scenario: &Scenario) -> Result<ChannelMatrix> {
    let k = scenario.num_users();
    let n = scenario.num_leds();
    let mut gains = DMatrix::zeros(k, n);
    for (ki, user) in scenario.user_positions.iter().enumerate() {
        for (ni, led_pos) in scenario.led_positions.iter().enumerate() {
            gains[(ki, ni)] = channel_gain(led_pos, user, &scenario.led, &scenario.panel)?;
        }
    }
    Ok(ChannelMatrix::from_gains(gains))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;
    use proptest::prelude::*;

    #[test]
    fn lambertian_order_values() {
        assert!((lambertian_order(60.0).unwrap() - 1.0).abs() < 1e-12);
        // cos 45° = 1/√2, so l = ln2 / (½ ln2) = 2
        assert!((lambertian_order(45.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(lambertian_order(90.0).is_err());
        assert!(lambertian_order(0.0).is_err());
    }

    proptest! {
        #[test]
        fn lambertian_order_decreases_with_wider_beams(a in 1.0f64..88.0, da in 0.1f64..1.0) {
            prop_assert!(lambertian_order(a + da).unwrap() < lambertian_order(a).unwrap());
        }
    }

    #[test]
    fn effective_area_cases() {
        let panel = PanelParams::default();
        assert!((effective_area(&panel) - 30e-4).abs() < 1e-15);
        let unit = PanelParams {
            fov_deg: 90.0,
            refractive_index: 1.0,
            ..PanelParams::default()
        };
        assert!((effective_area(&unit) - unit.detector_area).abs() < 1e-18);
        let half = PanelParams {
            detector_area: panel.detector_area / 2.0,
            ..panel.clone()
        };
        assert!((effective_area(&half) * 2.0 - effective_area(&panel)).abs() < 1e-18);
    }

    #[test]
    fn on_axis_gain_matches_hand_value() {
        let s = default_scenario();
        let led = [1.5, 1.5, 4.5];
        let g = channel_gain(&led, &[1.5, 1.5, 1.7], &s.led, &s.panel).unwrap();
        let expected = 2.0 * 0.54 * 0.003 / (2.0 * std::f64::consts::PI * 7.84);
        assert!((g - expected).abs() / expected < 1e-12);
        assert!((g - 6.58e-5).abs() / 6.58e-5 < 1e-3);
    }

    #[test]
    fn inverse_square_on_axis() {
        let s = default_scenario();
        let near = channel_gain(&[1.0, 1.0, 3.0], &[1.0, 1.0, 2.0], &s.led, &s.panel).unwrap();
        let far = channel_gain(&[1.0, 1.0, 4.0], &[1.0, 1.0, 2.0], &s.led, &s.panel).unwrap();
        assert!((near / far - 4.0).abs() < 1e-12);
    }

    #[test]
    fn outside_fov_is_exactly_zero() {
        let s = default_scenario();
        // 1 m drop, 2 m offset: incidence ≈ 63.4° > 60°
        let g = channel_gain(&[0.5, 1.0, 3.0], &[2.5, 1.0, 2.0], &s.led, &s.panel).unwrap();
        assert_eq!(g, 0.0);
        let g = channel_gain(&[0.5, 1.0, 3.0], &[1.5, 1.0, 2.0], &s.led, &s.panel).unwrap();
        assert!(g > 0.0);
    }

    #[test]
    fn coincident_points_rejected() {
        let s = default_scenario();
        let err = channel_gain(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &s.led, &s.panel);
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn default_matrix_shape_and_grams() {
        let ch = channel_matrix(&default_scenario()).unwrap();
        assert_eq!((ch.num_users(), ch.num_leds()), (3, 8));
        assert!(ch.gains.iter().all(|g| *g >= 0.0));
        for k in 0..3 {
            let h = ch.user(k);
            let eig = ch.grams[k].clone().symmetric_eigen();
            let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(ev[1].abs() < 1e-12 * ev[0]);
            assert!((ch.grams[k].trace() - h.norm_squared()).abs() < 1e-20);
        }
    }

    #[test]
    fn symmetric_leds_get_equal_gains() {
        let s = default_scenario().with_users(vec![[1.5, 1.5, 1.7]]);
        let ch = channel_matrix(&s).unwrap();
        // LEDs 5 and 6 sit at (0.5,1.5) and (2.5,1.5)
        assert!((ch.gains[(0, 4)] - ch.gains[(0, 5)]).abs() < 1e-18);
    }

    proptest! {
        #[test]
        fn gain_is_rotation_invariant(r in 0.0f64..1.5, a in 0.0f64..std::f64::consts::TAU, b in 0.0f64..std::f64::consts::TAU) {
            let s = default_scenario();
            let led = [1.5, 1.5, 4.5];
            let ua = [1.5 + r * a.cos(), 1.5 + r * a.sin(), 1.7];
            let ub = [1.5 + r * b.cos(), 1.5 + r * b.sin(), 1.7];
            let ga = channel_gain(&led, &ua, &s.led, &s.panel).unwrap();
            let gb = channel_gain(&led, &ub, &s.led, &s.panel).unwrap();
            prop_assert!((ga - gb).abs() <= 1e-12 * ga.max(gb));
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_user() {
        let ch = channel_matrix(&default_scenario()).unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
    }
}
