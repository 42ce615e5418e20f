//! Penalized concave-convex outer loop.
//!
//! Every iteration solves the convex subproblem built at the previous
//! iterate, then moves the expansion point (lifted precoders, their principal
//! eigenvectors, θ and the rate slacks) to the subproblem optimum. The
//! tracked value `t + ρ Σ_i (Tr P_i − λ_max P_i)` never decreases for a fixed
//! ρ. Once it settles, the rank gap is checked; if it is still too large the
//! penalty weight grows and the loop continues. Precoders are finally
//! recovered from the principal eigenpairs and re-validated against the
//! original constraints.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{channel_matrix, ChannelMatrix};
use crate::energy::HarvestReport;
use crate::error::{Error, Result};
use crate::linalg::principal_eigen;
use crate::rates::{mmf_rate, stream_powers, RateAllocation};
use crate::scenario::Scenario;
use crate::schemes::{allocation, rate_terms, slot_rates, SchemeConfig, SchemeKind};
use crate::signal::{check_with, dc_bias, BeamformerSet, ConstraintReport, StreamParams};
use crate::subproblem::backend::{ClarabelBackend, ConicBackend, SolveStatus};
use crate::subproblem::program::{Assignment, RateSlot, Scalar};
use crate::subproblem::{penalty_residual, LinearizationPoint, Subproblem};

/// Largest drop of the tracked value accepted from one subproblem solve.
const ASCENT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub convergence_tol: f64,
    /// Initial penalty weight, negative.
    pub penalty_rho: f64,
    pub penalty_growth: f64,
    /// How many times ρ may be scaled by `penalty_growth`.
    pub max_growth_rounds: usize,
    pub max_iters: usize,
    pub theta_min: f64,
    /// Allowed rank gap relative to `Σ_i Tr P_i`.
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            convergence_tol: 1e-4,
            penalty_rho: -10.0,
            penalty_growth: 5.0,
            max_growth_rounds: 4,
            max_iters: 500,
            theta_min: crate::subproblem::THETA_MIN,
            rank_tol: 1e-4,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(Error::invalid("convergence_tol", "must be positive"));
        }
        if !(self.penalty_rho < 0.0) {
            return Err(Error::invalid("penalty_rho", "must be negative"));
        }
        if !(self.penalty_growth >= 1.0) {
            return Err(Error::invalid("penalty_growth", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.theta_min > 0.0 && self.theta_min < 1.0) {
            return Err(Error::invalid("theta_min", "must lie in (0, 1)"));
        }
        if !(self.rank_tol > 0.0) {
            return Err(Error::invalid("rank_tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    /// `max_iters` reached; the trace and the last iterate are still returned.
    MaxIterations,
    /// Converged, but the rank gap stayed above tolerance after every
    /// penalty increase.
    RankDeficient,
    /// The conic backend failed on a subproblem whose expansion point was
    /// already feasible; that point is returned.
    BackendStalled,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::MaxIterations => "max_iterations",
            Outcome::RankDeficient => "rank_deficient",
            Outcome::BackendStalled => "backend_stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub rho: f64,
    /// Max-min rate certified by the accepted iterate: its PSD part, θ and
    /// the subproblem slacks capped at the exact rates.
    pub t: f64,
    pub penalty_residual: f64,
    /// `t + ρ · penalty_residual`.
    pub objective: f64,
    /// Value of the previous iterate under this iteration's ρ; ascent means
    /// `objective ≥ previous`.
    pub previous: f64,
    pub theta: f64,
    pub backend: SolveStatus,
    /// Tracked value of a solve that was discarded for landing below the
    /// incumbent.
    pub rejected: Option<f64>,
}

/// Result of the transmit-side and harvesting checks on recovered precoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub transmit: ConstraintReport,
    pub harvest: HarvestReport,
    /// Largest violation of the lifted optical bound `Σ_i A_i² p_{i,n}² ≤ h²`.
    pub lifted_optical_violation: f64,
    pub theta: f64,
    pub theta_cap: f64,
    pub tolerance: f64,
}

impl Validation {
    /// Every constraint of the original problem holds: common-rate split,
    /// share signs, energy floors, θ range, optical and power limits.
    pub fn p0_satisfied(&self, alloc: &RateAllocation) -> bool {
        alloc.is_consistent(self.tolerance)
            && self.harvest.satisfied(self.tolerance)
            && self.theta > 0.0
            && self.theta <= 1.0 + self.tolerance
            && self.transmit.optical_ok()
            && self.transmit.power_ok()
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub scheme: SchemeConfig,
    pub beamformers: BeamformerSet,
    pub allocation: RateAllocation,
    /// Max-min rate of the recovered precoders.
    pub mmf_value: f64,
    /// Max-min rate of the last lifted iterate, from its exact rates.
    pub relaxed_objective: f64,
    pub trace: Vec<IterRecord>,
    pub penalty_residual: f64,
    pub lifted_trace: f64,
    pub lifted: Vec<DMatrix<f64>>,
    pub status: Outcome,
    /// Backend message when the run ended in `BackendStalled`.
    pub backend_detail: Option<String>,
    pub validation: Validation,
    pub final_rho: f64,
}

impl Solution {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn theta(&self) -> f64 {
        self.allocation.theta
    }

    /// Largest drop of the tracked value across one iteration (0 if none).
    pub fn worst_descent(&self) -> f64 {
        self.trace
            .iter()
            .map(|r| (r.previous - r.objective).max(0.0))
            .fold(0.0, f64::max)
    }

    /// One line per iteration: `m t residual θ`.
    pub fn trace_log(&self) -> String {
        self.trace
            .iter()
            .map(|r| {
                format!(
                    "{} {:.10e} {:.6e} {:.8}\n",
                    r.iteration, r.t, r.penalty_residual, r.theta
                )
            })
            .collect()
    }
}

fn unit(v: DVector<f64>) -> Option<DVector<f64>> {
    let n = v.norm();
    (n > 0.0).then(|| v / n)
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
        if let Some(u) = unit(v) {
            return u;
        }
    }
}

/// Largest uniform scale of `dirs` that keeps every transmit constraint at
/// least 10 % inside its bound.
fn feasible_scale(dirs: &BeamformerSet, sub: &Subproblem<'_>) -> f64 {
    let params = &sub.params;
    let n = dirs.num_leds();
    let margin = 0.9;
    let mut scale = f64::INFINITY;
    for led in 0..n {
        let mut abs = 0.0;
        let mut signed = 0.0;
        let mut sq = 0.0;
        for (p, a) in dirs.streams.iter().zip(&params.amplitude) {
            abs += a * p[led].abs();
            signed += a * p[led];
            sq += (a * p[led]).powi(2);
        }
        if abs > 0.0 {
            scale = scale.min(margin * dirs.bias / abs);
        }
        if signed > 0.0 {
            scale = scale.min(margin * sub.headroom / signed);
        }
        if sq > 0.0 {
            scale = scale.min((margin * sub.headroom * sub.headroom / sq).sqrt());
        }
    }
    let power: f64 = dirs
        .streams
        .iter()
        .zip(&params.variance)
        .map(|(p, e)| p.norm_squared() * e)
        .sum();
    if power > 0.0 {
        scale = scale.min((margin * sub.scenario.transmit_power / power).sqrt());
    }
    if scale.is_finite() {
        scale
    } else {
        0.0
    }
}

/// Received power of every stream at every user.
pub fn received_powers(channel: &ChannelMatrix, beams: &BeamformerSet) -> Vec<Vec<f64>> {
    (0..channel.num_users())
        .map(|k| stream_powers(&channel.user(k), beams))
        .collect()
}

/// Matched-filter starting point scaled 10 % inside every transmit limit.
/// Private streams follow their user's channel, the common stream follows
/// the dominant direction of `Σ_k H_k`; a user with an all-zero channel gets
/// a seeded random direction.
pub fn initialize(
    scenario: &Scenario,
    channel: &ChannelMatrix,
    scheme: &SchemeConfig,
    seed: u64,
) -> Result<LinearizationPoint> {
    let sub = Subproblem::new(scenario, channel, crate::subproblem::THETA_MIN)?;
    Ok(initial_point(&sub, scheme, seed))
}

fn initial_point(sub: &Subproblem<'_>, scheme: &SchemeConfig, seed: u64) -> LinearizationPoint {
    let channel = sub.channel;
    let n = channel.num_leds();
    let k = channel.num_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = BeamformerSet::zeros(n, k, dc_bias(&sub.scenario.led, n));
    for u in 0..k {
        dirs.streams[u + 1] = unit(channel.user(u)).unwrap_or_else(|| random_unit(n, &mut rng));
    }
    if scheme.kind == SchemeKind::Rsma {
        let total = channel
            .grams
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, g| acc + g);
        let (l, u) = principal_eigen(&total);
        dirs.streams[0] = if l > 0.0 { u } else { random_unit(n, &mut rng) };
    }
    let beams = dirs.scaled(feasible_scale(&dirs, sub));
    let theta = 0.9 * sub.theta_cap.min(1.0);
    let powers = received_powers(channel, &beams);
    let slacks = slot_rates(scheme, &powers, &sub.params, sub.sigma2);
    LinearizationPoint::from_beams(&beams, theta, slacks)
}

/// Expansion point for `scheme` built from existing precoders, e.g. the
/// solution of another scheme or of a neighbouring scenario. The precoders
/// are scaled down when they exceed this scenario's transmit limits, θ is
/// moved into the admissible range and the slacks are the exact rates.
pub fn warm_point(
    scenario: &Scenario,
    channel: &ChannelMatrix,
    scheme: &SchemeConfig,
    beams: &BeamformerSet,
    theta: f64,
    theta_min: f64,
) -> Result<LinearizationPoint> {
    let sub = Subproblem::new(scenario, channel, theta_min)?;
    let mut beams = beams.clone();
    beams.bias = dc_bias(&scenario.led, scenario.num_leds());
    if scheme.kind != SchemeKind::Rsma {
        beams.streams[0].fill(0.0);
    }
    let fit = (feasible_scale(&beams, &sub) / 0.9).min(1.0);
    let beams = beams.scaled(fit);
    let theta = theta.clamp(theta_min, sub.theta_cap.min(1.0));
    let powers = received_powers(channel, &beams);
    let slacks = slot_rates(scheme, &powers, &sub.params, sub.sigma2);
    Ok(LinearizationPoint::from_beams(&beams, theta, slacks))
}

/// Nearest PSD matrix: the symmetric part with negative eigenvalues
/// clipped. Interior-point solutions sit marginally outside the cone, which
/// at high SNR is enough to turn interference powers negative.
fn psd_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|l| *l >= 0.0) {
        return (m + m.transpose()) * 0.5;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Subproblem slacks capped by the exact rates of `lifted`, so that the
/// tracked objective never credits more than the precoders deliver.
fn verified_slacks(
    sub: &Subproblem<'_>,
    scheme: &SchemeConfig,
    lifted: &[DMatrix<f64>],
    values: &Assignment,
) -> BTreeMap<RateSlot, f64> {
    rate_terms(scheme, sub.num_users())
        .into_iter()
        .map(|term| {
            let exact = sub.lifted_rate(lifted, term.user, term.target, &term.undecoded);
            let solved = values
                .scalars
                .get(&Scalar::Slack(term.slot))
                .copied()
                .unwrap_or(exact);
            (term.slot, solved.min(exact))
        })
        .collect()
}

/// Shares and objective value that make a linearization point feasible for
/// its own subproblem, when such values exist.
fn point_assignment(point: &LinearizationPoint, scheme: &SchemeConfig, k: usize) -> Assignment {
    let theta = point.theta;
    let get = |s: RateSlot| point.slacks.get(&s).copied().unwrap_or(0.0);
    let mut scalars = BTreeMap::new();
    let mut shares = vec![0.0; k];
    let t = match scheme.kind {
        SchemeKind::Rsma => {
            let common: Vec<f64> = (0..k).map(|u| get(RateSlot::Common(u))).collect();
            let private: Vec<f64> = (0..k).map(|u| get(RateSlot::Private(u))).collect();
            shares = RateAllocation::water_filled(theta, &common, &private).common_shares;
            (0..k)
                .map(|u| shares[u] + theta * private[u])
                .fold(f64::INFINITY, f64::min)
        }
        SchemeKind::Sdma => (0..k)
            .map(|u| theta * get(RateSlot::Private(u)))
            .fold(f64::INFINITY, f64::min),
        SchemeKind::Noma => point
            .slacks
            .iter()
            .filter(|(s, _)| matches!(s, RateSlot::Sic { .. }))
            .map(|(_, v)| theta * v)
            .fold(f64::INFINITY, f64::min),
    };
    scalars.insert(Scalar::Objective, t);
    scalars.insert(Scalar::Theta, theta);
    for (u, c) in shares.iter().enumerate() {
        scalars.insert(Scalar::Share(u), *c);
    }
    for (s, v) in &point.slacks {
        scalars.insert(Scalar::Slack(*s), *v);
    }
    Assignment {
        scalars,
        blocks: point.lifted.clone(),
    }
}

/// `p_i = √λ_max · u_max` for every lifted precoder; fails when a matrix is
/// not numerically rank one.
pub fn recover_beamformers(lifted: &[DMatrix<f64>], rank_tol: f64, bias: f64) -> Result<BeamformerSet> {
    for (i, m) in lifted.iter().enumerate() {
        let (l, _) = principal_eigen(m);
        let tr = m.trace();
        let ratio = (tr - l).max(0.0) / tr.max(1e-12);
        if ratio > rank_tol {
            return Err(Error::RankRecovery { stream: i, ratio });
        }
    }
    Ok(principal_beams(lifted, bias))
}

fn principal_beams(lifted: &[DMatrix<f64>], bias: f64) -> BeamformerSet {
    let streams = lifted
        .iter()
        .map(|m| {
            let (l, u) = principal_eigen(m);
            if l > 0.0 {
                u * l.sqrt()
            } else {
                DVector::zeros(m.nrows())
            }
        })
        .collect();
    BeamformerSet { streams, bias }
}

/// Picks the sign of each recovered precoder. Rates only see `|h_kᵀ p_i|`,
/// but the per-LED signed swing must stay inside `[I_L − b, headroom]`:
/// prefer the signs that keep both sides, and fall back to the signs that
/// best satisfy the upper (optical) side.
pub fn orient_streams(beams: &mut BeamformerSet, scenario: &Scenario, params: &StreamParams) {
    let active: Vec<usize> = (0..beams.streams.len())
        .filter(|i| beams.streams[*i].norm() > 0.0)
        .collect();
    if active.is_empty() || active.len() > 12 {
        return;
    }
    let score = |b: &BeamformerSet| {
        let r = check_with(b, scenario, params, 0.0);
        let upper = r.optical.iter().copied().fold(f64::INFINITY, f64::min);
        let lower = r.current_floor.iter().copied().fold(f64::INFINITY, f64::min);
        (upper.min(lower), upper)
    };
    let flipped = |mask: u32| {
        let mut b = beams.clone();
        for (bit, i) in active.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                b.streams[*i] = -&b.streams[*i];
            }
        }
        b
    };
    let mut best_both = (f64::NEG_INFINITY, 0u32);
    let mut best_upper = (f64::NEG_INFINITY, 0u32);
    for mask in 0..(1u32 << active.len()) {
        let (both, upper) = score(&flipped(mask));
        if both > best_both.0 {
            best_both = (both, mask);
        }
        if upper > best_upper.0 {
            best_upper = (upper, mask);
        }
    }
    let chosen = if score(&flipped(best_both.1)).1 >= 0.0 {
        best_both.1
    } else {
        best_upper.1
    };
    *beams = flipped(chosen);
}

/// The precoders of a solution without common stream read as an RSMA
/// solution with the common stream switched off. A silent common stream
/// carries no message, so nothing is decoded ahead of the private streams
/// and their rates are unchanged. The RSMA subproblem itself cannot reach
/// such points: it requires every common-rate bound to be non-negative, and
/// the bound of a zero-power stream is negative under private interference.
pub fn silent_common(sol: &Solution, scenario: &Scenario, channel: &ChannelMatrix) -> Solution {
    let k = channel.num_users();
    let scheme = SchemeConfig::rsma();
    let mut beams = sol.beamformers.clone();
    beams.streams[0].fill(0.0);
    let params = StreamParams::for_scenario(scenario);
    let rates = slot_rates(&scheme, &received_powers(channel, &beams), &params, scenario.noise_power);
    let alloc = allocation(&scheme, k, sol.theta(), &rates);
    Solution {
        scheme,
        mmf_value: mmf_rate(&alloc),
        allocation: alloc,
        beamformers: beams,
        ..sol.clone()
    }
}

/// Runs the outer loop for `scheme` with the default Clarabel backend.
///
/// For RSMA the SDMA optimum with a silent common stream is kept as a
/// candidate, and the better of the two is returned.
pub fn solve_mmf(scenario: &Scenario, scheme: &SchemeConfig, opts: &SolverOptions) -> Result<Solution> {
    let channel = channel_matrix(scenario)?;
    let backend = ClarabelBackend::default();
    let cold = solve_with(scenario, &channel, scheme, opts, &backend, None)?;
    if scheme.kind != SchemeKind::Rsma {
        return Ok(cold);
    }
    let sdma = solve_with(scenario, &channel, &SchemeConfig::sdma(), opts, &backend, None)
        .map(|s| silent_common(&s, scenario, &channel));
    Ok(match sdma {
        Ok(alt) if alt.mmf_value > cold.mmf_value + 1e-12 => alt,
        _ => cold,
    })
}

/// Runs the outer loop, optionally from a caller-supplied starting point.
pub fn solve_with(
    scenario: &Scenario,
    channel: &ChannelMatrix,
    scheme: &SchemeConfig,
    opts: &SolverOptions,
    backend: &dyn ConicBackend,
    start: Option<LinearizationPoint>,
) -> Result<Solution> {
    opts.validate()?;
    let k = channel.num_users();
    scheme.validate(k)?;
    let sub = Subproblem::new(scenario, channel, opts.theta_min)?;
    // with no optical headroom or no power the only precoder is zero
    let trivial = sub.headroom <= 0.0 || scenario.transmit_power <= 0.0;
    let mut point = match start {
        Some(p) if !trivial => p,
        _ => initial_point(&sub, scheme, opts.seed),
    };
    if scheme.kind != SchemeKind::Rsma {
        let mut lifted = point.lifted;
        lifted[0] = DMatrix::zeros(channel.num_leds(), channel.num_leds());
        point = LinearizationPoint::from_lifted(lifted, point.theta, point.slacks);
    }

    let mut rho = opts.penalty_rho;
    let mut growth_rounds = 0;
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut status = if trivial {
        Outcome::Converged
    } else {
        Outcome::MaxIterations
    };
    let mut backend_detail = None;

    let start_program = sub.build(&point, scheme, rho)?;
    let start_values = point_assignment(&point, scheme, k);
    let start_feasible = start_program.max_violation(&start_values) <= 1e-7;
    let mut prev_t = if start_feasible {
        start_values.scalar(Scalar::Objective)
    } else {
        f64::NEG_INFINITY
    };
    let mut prev_residual = penalty_residual(&point.lifted);

    let max_iters = if trivial { 0 } else { opts.max_iters };
    for iteration in 1..=max_iters {
        let program = sub.build(&point, scheme, rho)?;
        let sol = backend.solve(&program);
        if !sol.status.is_usable() {
            let detail = format!("{:?} ({}) at iteration {iteration}", sol.status, sol.detail);
            if !prev_t.is_finite() {
                return Err(Error::Backend { status: detail });
            }
            // the incumbent is still a feasible point of the last subproblem
            status = Outcome::BackendStalled;
            backend_detail = Some(detail);
            break;
        }
        let values = sol.values;
        let lifted: Vec<DMatrix<f64>> = values.blocks.iter().map(psd_part).collect();
        let theta = values
            .scalar(Scalar::Theta)
            .clamp(opts.theta_min, sub.theta_cap.min(1.0));
        let slacks = verified_slacks(&sub, scheme, &lifted, &values);
        let candidate_point = LinearizationPoint::from_lifted(lifted, theta, slacks);
        let t = point_assignment(&candidate_point, scheme, k).scalar(Scalar::Objective);
        let lifted = &candidate_point.lifted;
        let residual = penalty_residual(lifted);
        let candidate = t + rho * residual;
        let previous = prev_t + rho * prev_residual;
        // An exact solve never lands below the incumbent, which is feasible
        // for this subproblem. An inexact one can; keep the incumbent then.
        let accepted = candidate >= previous - ASCENT_SLACK;
        if accepted {
            point = candidate_point;
            prev_t = t;
            prev_residual = residual;
        }
        trace.push(IterRecord {
            iteration,
            rho,
            t: prev_t,
            penalty_residual: prev_residual,
            objective: prev_t + rho * prev_residual,
            previous,
            theta: point.theta,
            backend: sol.status,
            rejected: (!accepted).then_some(candidate),
        });
        let step = prev_t + rho * prev_residual - previous;

        if step.abs() < opts.convergence_tol {
            let total: f64 = point.lifted.iter().map(|m| m.trace()).sum();
            if prev_residual <= opts.rank_tol * total.max(f64::MIN_POSITIVE) {
                status = Outcome::Converged;
                break;
            }
            if growth_rounds < opts.max_growth_rounds {
                growth_rounds += 1;
                rho *= opts.penalty_growth;
            } else {
                status = Outcome::RankDeficient;
                break;
            }
        }
    }

    let lifted = point.lifted.clone();
    let exact: BTreeMap<RateSlot, f64> = rate_terms(scheme, k)
        .into_iter()
        .map(|term| {
            let r = sub.lifted_rate(&lifted, term.user, term.target, &term.undecoded);
            (term.slot, r)
        })
        .collect();
    let relaxed = point_assignment(
        &LinearizationPoint::from_lifted(lifted.clone(), point.theta, exact),
        scheme,
        k,
    )
    .scalar(Scalar::Objective);
    let bias = dc_bias(&scenario.led, scenario.num_leds());
    let mut beamformers = principal_beams(&lifted, bias);
    orient_streams(&mut beamformers, scenario, &sub.params);
    let theta = point.theta;
    let powers = received_powers(channel, &beamformers);
    let rates = slot_rates(scheme, &powers, &sub.params, sub.sigma2);
    let alloc = allocation(scheme, k, theta, &rates);
    let mmf_value = mmf_rate(&alloc);

    let transmit = check_with(&beamformers, scenario, &sub.params, crate::signal::DEFAULT_TOLERANCE);
    let h2 = sub.headroom * sub.headroom;
    let lifted_optical_violation = (0..channel.num_leds())
        .map(|n| {
            let used: f64 = beamformers
                .streams
                .iter()
                .zip(&sub.params.amplitude)
                .map(|(p, a)| (a * p[n]).powi(2))
                .sum();
            (used - h2).max(0.0)
        })
        .fold(0.0, f64::max);
    let validation = Validation {
        transmit,
        harvest: HarvestReport::new(scenario, channel, theta),
        lifted_optical_violation,
        theta,
        theta_cap: sub.theta_cap,
        tolerance: crate::signal::DEFAULT_TOLERANCE,
    };
    Ok(Solution {
        scheme: scheme.clone(),
        beamformers,
        allocation: alloc,
        mmf_value,
        relaxed_objective: relaxed,
        trace,
        penalty_residual: penalty_residual(&lifted),
        lifted_trace: lifted.iter().map(|m| m.trace()).sum(),
        lifted,
        status,
        backend_detail,
        validation,
        final_rho: rho,
    })
}
