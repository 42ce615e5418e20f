use super::*;
use crate::channel::channel_matrix;
use crate::scenario::{default_scenario, Point3};
use crate::schemes::{slot_rates, SchemeKind};
use crate::signal::dc_bias;
use crate::solver::{initialize, received_powers};
use program::{Assignment, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() * scale
}

fn random_point(k: usize, n: usize, rng: &mut ChaCha8Rng) -> LinearizationPoint {
    let lifted = (0..=k).map(|_| random_psd(n, rng.gen_range(0.1..2.0), rng)).collect();
    LinearizationPoint::from_lifted(lifted, rng.gen_range(0.1..1.0), BTreeMap::new())
}

fn single_user() -> Scenario {
    let p: Point3 = [1.5, 1.5, crate::scenario::USER_HEIGHT];
    default_scenario().with_users(vec![p])
}

#[test]
fn interference_tangent_touches_at_point() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let params = StreamParams::for_scenario(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let pt = random_point(3, 8, &mut rng);
        for user in 0..3 {
            for variant in [Variant::Common, Variant::Private] {
                let f = linearize_f(&pt, &ch, &params, s.noise_power, user, variant);
                let interferers: Vec<usize> = f.weights.iter().map(|(j, _)| *j).collect();
                let exact = interference_log(&ch.grams[user], &pt.lifted, &params, s.noise_power, &interferers);
                let lin = f.eval(&ch.grams[user], &pt.lifted);
                assert!((exact - lin).abs() <= 1e-9, "{exact} vs {lin}");
            }
        }
    }
}

#[test]
fn interference_tangent_over_estimates() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let params = StreamParams::for_scenario(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pt = random_point(3, 8, &mut rng);
    for _ in 0..100 {
        let other: Vec<DMatrix<f64>> = (0..4)
            .map(|_| random_psd(8, rng.gen_range(0.0..4.0), &mut rng))
            .collect();
        for user in 0..3 {
            for variant in [Variant::Common, Variant::Private] {
                let f = linearize_f(&pt, &ch, &params, s.noise_power, user, variant);
                let interferers: Vec<usize> = f.weights.iter().map(|(j, _)| *j).collect();
                let exact = interference_log(&ch.grams[user], &other, &params, s.noise_power, &interferers);
                assert!(f.eval(&ch.grams[user], &other) >= exact - 1e-12);
            }
        }
    }
}

#[test]
fn single_user_private_tangent_is_noise_floor() {
    let s = single_user();
    let ch = channel_matrix(&s).unwrap();
    let params = StreamParams::for_scenario(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pt = random_point(1, 8, &mut rng);
    let f = linearize_f(&pt, &ch, &params, s.noise_power, 0, Variant::Private);
    assert!(f.weights.is_empty());
    assert!((f.constant - (2.0 * PI * s.noise_power).log2()).abs() < 1e-12);
    assert_eq!(f.normalized_at_point, 1.0);
}

#[test]
fn square_tangent_touches_and_under_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (t0, v0) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..10.0));
        let g = linearize_g(t0, v0);
        let at = 0.25 * (t0 + v0) * (t0 + v0);
        assert!((g.eval(t0, v0) - at).abs() <= 1e-9 * at.max(1.0));
        let (t, v) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..10.0));
        assert!(g.eval(t, v) <= 0.25 * (t + v) * (t + v) + 1e-12);
    }
}

#[test]
fn penalty_residual_cases() {
    let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    assert!(penalty_residual(&[&v * v.transpose()]).abs() < 1e-12);
    let eye = DMatrix::<f64>::identity(2, 2);
    assert!((penalty_residual(&[eye]) - 1.0).abs() < 1e-12);
    assert_eq!(penalty_residual(&[DMatrix::zeros(3, 3)]), 0.0);
}

#[test]
fn sdr_substitution_is_exact() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let p = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let lifted = &p * p.transpose();
        for k in 0..3 {
            let h = ch.user(k);
            let direct = h.dot(&p).powi(2);
            let sdr = ch.grams[k].dot(&lifted);
            assert!((direct - sdr).abs() <= 1e-10 * direct.max(f64::MIN_POSITIVE));
        }
    }
}

#[test]
fn rsma_structure() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let pt = initialize(&s, &ch, &SchemeConfig::rsma(), 0).unwrap();
    let prog = build_subproblem(&pt, &s, &ch, &SchemeConfig::rsma(), -10.0).unwrap();
    assert_eq!(prog.dim, 8);
    assert_eq!(prog.psd_streams, vec![0, 1, 2, 3]);
    assert_eq!(prog.count(ConeKind::Exponential), 6);
    assert_eq!(prog.count(ConeKind::SecondOrder), 6);
    // 8 optical rows, power, θ floor, θ cap, 3 share floors
    assert_eq!(prog.count(ConeKind::NonNegative), 14);
    assert!(prog.has_tag(Tag::Power));
    assert!(prog.has_tag(Tag::ThetaCap));
}

#[test]
fn sdma_drops_common_stream() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let cfg = SchemeConfig::sdma();
    let pt = initialize(&s, &ch, &cfg, 0).unwrap();
    let prog = build_subproblem(&pt, &s, &ch, &cfg, -10.0).unwrap();
    assert_eq!(prog.psd_streams, vec![1, 2, 3]);
    assert_eq!(prog.count(ConeKind::Exponential), 3);
    assert_eq!(prog.count(ConeKind::SecondOrder), 3);
    assert!(!(0..3).any(|k| prog.has_tag(Tag::Rate(RateSlot::Common(k)))));
    assert!(!prog.scalars.iter().any(|s| matches!(s, Scalar::Share(_))));
    for c in &prog.constraints {
        assert!(c.exprs.iter().all(|e| !e.references_stream(0)));
    }
}

#[test]
fn noma_chain_counts() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let cfg = SchemeConfig::for_channel(SchemeKind::Noma, &ch);
    let pt = initialize(&s, &ch, &cfg, 0).unwrap();
    let prog = build_subproblem(&pt, &s, &ch, &cfg, -10.0).unwrap();
    // 3 + 2 + 1 decodability bounds
    assert_eq!(prog.count(ConeKind::Exponential), 6);
    assert_eq!(prog.count(ConeKind::SecondOrder), 6);
    assert!(!prog.psd_streams.contains(&0));
}

#[test]
fn zero_rho_objective_is_t() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let pt = initialize(&s, &ch, &SchemeConfig::rsma(), 0).unwrap();
    let prog = build_subproblem(&pt, &s, &ch, &SchemeConfig::rsma(), 0.0).unwrap();
    assert_eq!(prog.objective.terms, vec![(Var::Scalar(Scalar::Objective), 1.0)]);
    assert_eq!(prog.objective.constant, 0.0);
}

#[test]
fn penalty_objective_vanishes_on_rank_one_point() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let pt = initialize(&s, &ch, &SchemeConfig::rsma(), 0).unwrap();
    let prog = build_subproblem(&pt, &s, &ch, &SchemeConfig::rsma(), -10.0).unwrap();
    let values = Assignment {
        scalars: [(Scalar::Objective, 0.0)].into_iter().collect(),
        blocks: pt.lifted.clone(),
    };
    assert!(prog.objective.eval(&values).abs() < 1e-9);
}

/// Exponential cone `(x, 1, z)`: the rate bound is tight exactly when
/// `x = ln z`.
#[test]
fn rate_constraints_are_tight_at_point() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    for kind in SchemeKind::ALL {
        let cfg = SchemeConfig::for_channel(kind, &ch);
        let mut pt = initialize(&s, &ch, &cfg, 0).unwrap();
        let sub = Subproblem::new(&s, &ch, THETA_MIN).unwrap();
        pt.slacks = slot_rates(&cfg, &received_powers(&ch, &beams_of(&pt)), &sub.params, sub.sigma2);
        for term in rate_terms(&cfg, 3) {
            let c = sub.rate_constraint(&pt, term.slot, term.user, term.target, &term.undecoded);
            let values = Assignment {
                scalars: pt.slacks.iter().map(|(k, v)| (Scalar::Slack(*k), *v)).collect(),
                blocks: pt.lifted.clone(),
            };
            let x = c.exprs[0].eval(&values);
            let z = c.exprs[2].eval(&values);
            assert!((x - z.ln()).abs() <= 1e-9, "{kind}: {x} vs ln {z}");
        }
    }
}

#[test]
fn bilinear_constraints_are_tight_at_point() {
    let s = default_scenario();
    let ch = channel_matrix(&s).unwrap();
    let cfg = SchemeConfig::sdma();
    let pt = initialize(&s, &ch, &cfg, 0).unwrap();
    let sub = Subproblem::new(&s, &ch, THETA_MIN).unwrap();
    for u in 0..3 {
        let slot = RateSlot::Private(u);
        let v0 = pt.slacks[&slot];
        let c = sub.bilinear_constraint(&pt, slot, AffineExpr::scalar(Scalar::Objective));
        let values = Assignment {
            scalars: [
                (Scalar::Objective, pt.theta * v0),
                (Scalar::Theta, pt.theta),
                (Scalar::Slack(slot), v0),
            ]
            .into_iter()
            .collect(),
            blocks: pt.lifted.clone(),
        };
        let e: Vec<f64> = c.exprs.iter().map(|x| x.eval(&values)).collect();
        let gap = e[0] * e[0] - e[1] * e[1] - e[2] * e[2];
        assert!(gap.abs() <= 1e-9 * e[0] * e[0], "gap {gap}");
        assert!(c.violation(&values) <= 1e-9);
    }
}

fn beams_of(pt: &LinearizationPoint) -> BeamformerSet {
    let streams = pt
        .lifted
        .iter()
        .map(|m| {
            let (l, u) = principal_eigen(m);
            u * l.max(0.0).sqrt()
        })
        .collect();
    BeamformerSet { streams, bias: dc_bias(&default_scenario().led, 8) }
}

#[test]
fn zero_headroom_pins_precoders() {
    let mut s = default_scenario();
    s.led.max_optical_power = 100.0;
    let ch = channel_matrix(&s).unwrap();
    let pt = initialize(&s, &ch, &SchemeConfig::rsma(), 0).unwrap();
    assert!(pt.lifted.iter().all(|m| m.norm() == 0.0));
}

#[test]
fn program_dump_lists_every_constraint() {
    let s = single_user();
    let ch = channel_matrix(&s).unwrap();
    let pt = initialize(&s, &ch, &SchemeConfig::rsma(), 0).unwrap();
    let prog = build_subproblem(&pt, &s, &ch, &SchemeConfig::rsma(), -1.0).unwrap();
    let text = prog.to_string();
    assert!(text.contains("Rate(Common(0))"));
    assert!(text.contains("Power"));
}

proptest! {
    #[test]
    fn bilinear_identity_holds(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let ab = a * b;
        prop_assert!((bilinear_identity(a, b) - ab).abs() <= 1e-12 * ab.abs().max(1.0) * 4.0);
    }

    #[test]
    fn penalty_residual_non_negative(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..6);
        let mats: Vec<DMatrix<f64>> = (0..3).map(|_| random_psd(n, 1.0, &mut rng)).collect();
        prop_assert!(penalty_residual(&mats) >= -1e-12);
    }
}
