use super::*;
use crate::scenario::{default_scenario, USER_HEIGHT};
use std::f64::consts::PI;

fn small_scenario(users: &[[f64; 2]]) -> Scenario {
    let mut s = default_scenario();
    s.led_positions = vec![
        [0.75, 0.75, 4.5],
        [2.25, 0.75, 4.5],
        [0.75, 2.25, 4.5],
        [2.25, 2.25, 4.5],
    ];
    // same per-LED bias as the eight-LED reference
    s.led.max_optical_power = 62.5;
    s.user_positions = users.iter().map(|[x, y]| [*x, *y, USER_HEIGHT]).collect();
    s.energy_threshold = 0.5 * default_energy_grid(&s)[0] * 3.0;
    s
}

#[test]
fn axis_names_parse() {
    for axis in [Axis::EnergyThreshold, Axis::Snr, Axis::OpticalPower] {
        assert_eq!(axis.to_string().parse::<Axis>().unwrap(), axis);
    }
    assert_eq!("SNR".parse::<Axis>().unwrap(), Axis::Snr);
    assert_eq!("p-o".parse::<Axis>().unwrap(), Axis::OpticalPower);
    assert_eq!("energy".parse::<Axis>().unwrap(), Axis::EnergyThreshold);
    assert!("power".parse::<Axis>().is_err());
}

#[test]
fn default_grids() {
    let s = default_scenario();
    let snr = Axis::Snr.default_grid(&s);
    assert_eq!(snr, vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0]);
    let po = Axis::OpticalPower.default_grid(&s);
    assert_eq!(po.len(), 9);
    assert_eq!(po[0], 75.0);
    assert_eq!(po[8], 175.0);
    assert!(po.contains(&125.0));
    let eth = Axis::EnergyThreshold.default_grid(&s);
    assert_eq!(eth.len(), 10);
    assert!(eth.windows(2).all(|w| w[0] < w[1]));
    assert!((eth[9] / eth[0] - 2.8).abs() < 1e-12);
}

#[test]
fn axis_apply_sets_the_parameter() {
    let s = default_scenario();
    assert_eq!(Axis::EnergyThreshold.apply(&s, 0.01).energy_threshold, 0.01);
    assert!((Axis::Snr.apply(&s, 20.0).transmit_power - 100.0).abs() < 1e-9);
    assert_eq!(Axis::OpticalPower.apply(&s, 150.0).led.max_optical_power, 150.0);
}

#[test]
fn spec_validation() {
    let mut spec = SweepSpec::new(Axis::Snr, default_scenario());
    assert!(spec.validate().is_ok());
    spec.grid = vec![5.0, 0.0];
    assert!(spec.validate().is_err());
    spec.grid.clear();
    assert!(spec.validate().is_err());
    spec.grid = vec![0.0];
    spec.schemes.clear();
    assert!(spec.validate().is_err());
}

#[test]
fn empty_result_writes_header_only() {
    let result = SweepResult {
        axis: Axis::Snr,
        rows: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_csv(&result, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
}

fn strip_wall(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(7);
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_rows_and_determinism() {
    let mut spec = SweepSpec::new(Axis::Snr, default_scenario().with_users(vec![[1.2, 1.6, USER_HEIGHT]]));
    spec.grid = vec![0.0, 10.0];
    spec.schemes = vec![SchemeKind::Rsma, SchemeKind::Sdma];
    spec.continuation = false;
    let a = run_sweep(&spec).unwrap();
    assert_eq!(a.rows.len(), 4);
    assert_eq!(a.failures(), 0);
    assert_eq!(a.series(SchemeKind::Sdma, 0).len(), 2);
    let b = run_sweep(&spec).unwrap();
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    write_csv(&a, &mut ca).unwrap();
    write_csv(&b, &mut cb).unwrap();
    let (ca, cb) = (String::from_utf8(ca).unwrap(), String::from_utf8(cb).unwrap());
    assert_eq!(ca.lines().count(), 5);
    assert_eq!(strip_wall(&ca), strip_wall(&cb));
}

#[test]
fn infeasible_points_are_recorded() {
    let mut spec = SweepSpec::new(Axis::OpticalPower, default_scenario().with_users(vec![[1.2, 1.6, USER_HEIGHT]]));
    spec.grid = vec![75.0, 100.0];
    spec.schemes = vec![SchemeKind::Sdma];
    let r = run_sweep(&spec).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.rows[0].status, "infeasible");
    assert_eq!(r.rows[0].mmf_rate, 0.0);
    assert_eq!(r.rows[1].mmf_rate, 0.0);
    assert_eq!(r.failures(), 0);
}

#[test]
fn compositions_enumerate() {
    assert_eq!(compositions(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
    assert_eq!(compositions(3, 3).len(), 10);
    assert_eq!(compositions_box(2, 3).len(), 27);
}

#[test]
fn oracle_never_gets_worse_with_resolution() {
    let s = small_scenario(&[[0.8, 1.0], [2.1, 2.0]]);
    for kind in SchemeKind::ALL {
        let ch = channel_matrix(&s).unwrap();
        let cfg = SchemeConfig::for_channel(kind, &ch);
        let coarse = oracle_grid(&s, &cfg, 3).unwrap();
        let fine = oracle_grid(&s, &cfg, 6).unwrap();
        assert!(coarse > 0.0);
        assert!(fine >= coarse, "{kind}: {fine} < {coarse}");
    }
}

#[test]
fn single_user_oracle_matches_closed_form() {
    let s = small_scenario(&[[1.1, 1.4]]);
    let ch = channel_matrix(&s).unwrap();
    let h = ch.user(0);
    let u = h.normalize();
    let params = StreamParams::for_scenario(&s);
    let a = params.amplitude[1];
    let headroom = optical_headroom(&s.led, 4).unwrap();
    let bias = dc_bias(&s.led, 4);
    let peak = u.max();
    let scale = (headroom / (a * peak))
        .min(bias / (a * peak))
        .min((s.transmit_power / params.variance[1]).sqrt());
    let noise = 2.0 * PI * s.noise_power;
    let gain = params.tau[1] * (h.dot(&u) * scale).powi(2);
    let cap = theta_cap_with(&s, &ch).unwrap().min(1.0);
    let expected = cap * 0.5 * (1.0 + gain / noise).log2();
    let got = oracle_grid(&s, &SchemeConfig::sdma(), 4).unwrap();
    assert!((got - expected).abs() <= 1e-9 * expected, "{got} vs {expected}");
}
