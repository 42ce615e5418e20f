//! Parameter sweeps, CSV output and the brute-force grid oracle.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::{channel_matrix, ChannelMatrix};
use crate::energy::{peak_harvest, theta_cap_with};
use crate::error::{Error, Result};
use crate::linalg::principal_eigen;
use crate::rates::mmf_rate;
use crate::scenario::Scenario;
use crate::schemes::{allocation, slot_rates, SchemeConfig, SchemeKind};
use crate::signal::{check_with, dc_bias, optical_headroom, raw_optical_headroom, BeamformerSet, StreamParams};
use crate::solver::{received_powers, silent_common, solve_with, warm_point, Solution, SolverOptions};
use crate::subproblem::backend::{ClarabelBackend, ConicBackend};

/// Swept scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Per-user harvested-power floor, watts.
    EnergyThreshold,
    /// Transmit SNR, dB.
    Snr,
    /// Maximum optical power of the LED array, watts.
    OpticalPower,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::EnergyThreshold => "e_th",
            Axis::Snr => "snr",
            Axis::OpticalPower => "p_o",
        }
    }

    /// `scenario` with this parameter set to `value`.
    pub fn apply(self, scenario: &Scenario, value: f64) -> Scenario {
        let mut s = scenario.clone();
        match self {
            Axis::EnergyThreshold => s.energy_threshold = value,
            Axis::Snr => s = s.with_snr_db(value),
            Axis::OpticalPower => s.led.max_optical_power = value,
        }
        s
    }

    /// How permissive the scenario is along this axis: a larger key never
    /// shrinks the feasible set of precoders and decoding shares.
    fn looseness(self, scenario: &Scenario) -> f64 {
        match self {
            Axis::EnergyThreshold => -scenario.energy_threshold,
            Axis::Snr => scenario.transmit_power,
            Axis::OpticalPower => raw_optical_headroom(&scenario.led, scenario.num_leds()),
        }
    }

    pub fn default_grid(self, scenario: &Scenario) -> Vec<f64> {
        match self {
            Axis::EnergyThreshold => default_energy_grid(scenario),
            Axis::Snr => (0..7).map(|i| -5.0 + 5.0 * i as f64).collect(),
            Axis::OpticalPower => (0..9).map(|i| 75.0 + 12.5 * i as f64).collect(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "e_th" | "eth" | "energy" => Ok(Axis::EnergyThreshold),
            "snr" => Ok(Axis::Snr),
            "p_o" | "po" | "optical" => Ok(Axis::OpticalPower),
            other => Err(Error::invalid("axis", format!("unknown axis `{other}`"))),
        }
    }
}

/// The threshold grid of the harvesting sweep: ten levels that, read as
/// 100..=280 in steps of 20, map 300 onto the weakest user's peak harvest.
/// The decoding share therefore runs from 2/3 down to 1/15 along the grid.
pub fn default_energy_grid(scenario: &Scenario) -> Vec<f64> {
    let weakest = channel_matrix(scenario)
        .map(|ch| {
            (0..ch.num_users())
                .map(|k| peak_harvest(&ch.user(k), &scenario.panel, &scenario.led))
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(0.0);
    (0..10)
        .map(|i| (100.0 + 20.0 * i as f64) / 300.0 * weakest)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    pub scenario: Scenario,
    /// One repetition per seed. With `random_users` set, each seed also
    /// redraws the user positions.
    pub seeds: Vec<u64>,
    pub random_users: Option<usize>,
    pub options: SolverOptions,
    /// Warm-start every point from its stricter neighbour.
    pub continuation: bool,
}

impl SweepSpec {
    pub fn new(axis: Axis, scenario: Scenario) -> Self {
        Self {
            axis,
            grid: axis.default_grid(&scenario),
            schemes: SchemeKind::ALL.to_vec(),
            scenario,
            seeds: vec![0],
            random_users: None,
            options: SolverOptions::default(),
            continuation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "must not be empty"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid", "values must be finite"));
        }
        if self.grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("grid", "must be sorted ascending"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "must not be empty"));
        }
        self.options.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub scheme: SchemeKind,
    pub seed: u64,
    pub mmf_rate: f64,
    pub user_rates: Vec<f64>,
    pub theta: f64,
    pub iters: usize,
    pub penalty_residual: f64,
    pub status: String,
    pub wall_ms: f64,
}

impl SweepRow {
    pub fn is_failure(&self) -> bool {
        self.status.starts_with("error")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    /// Ordered by seed, then grid index, then scheme in spec order.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// MMF values of one scheme and seed along the grid.
    pub fn series(&self, scheme: SchemeKind, seed: u64) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.seed == seed)
            .map(|r| (r.axis_value, r.mmf_rate))
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_failure()).count()
    }
}

/// Best solution found for one scheme at one scenario.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub scheme: SchemeKind,
    pub solution: std::result::Result<Solution, String>,
    pub infeasible: bool,
    pub wall_ms: f64,
    /// Total outer iterations over every start.
    pub iters: usize,
}

impl PointOutcome {
    pub fn mmf(&self) -> f64 {
        self.solution.as_ref().map(|s| s.mmf_value).unwrap_or(0.0)
    }

    fn row(&self, axis_value: f64, seed: u64) -> SweepRow {
        match &self.solution {
            Ok(s) => SweepRow {
                axis_value,
                scheme: self.scheme,
                seed,
                mmf_rate: s.mmf_value,
                user_rates: s.allocation.totals(),
                theta: s.theta(),
                iters: self.iters,
                penalty_residual: s.penalty_residual,
                status: s.status.as_str().to_string(),
                wall_ms: self.wall_ms,
            },
            Err(e) => SweepRow {
                axis_value,
                scheme: self.scheme,
                seed,
                mmf_rate: 0.0,
                user_rates: Vec::new(),
                theta: 0.0,
                iters: self.iters,
                penalty_residual: 0.0,
                status: if self.infeasible {
                    "infeasible".to_string()
                } else {
                    format!("error: {e}")
                },
                wall_ms: self.wall_ms,
            },
        }
    }
}

fn better(a: Solution, b: Solution) -> Solution {
    if b.mmf_value > a.mmf_value + 1e-12 {
        b
    } else {
        a
    }
}

/// Precoders of a NOMA solution rearranged for RSMA: the stream every user
/// decodes first becomes the common stream.
fn noma_as_rsma(sol: &Solution) -> BeamformerSet {
    let mut beams = sol.beamformers.clone();
    if let Some(&first) = sol.scheme.noma_order.first() {
        beams.streams[0] = beams.streams[first + 1].clone();
        beams.streams[first + 1].fill(0.0);
    }
    beams
}

/// Warm starts begin at the largest admissible θ: every rate scales with θ
/// while the harvesting floor only caps it.
const THETA_FROM_CAP: f64 = f64::INFINITY;

fn run_start(
    scenario: &Scenario,
    channel: &ChannelMatrix,
    cfg: &SchemeConfig,
    opts: &SolverOptions,
    backend: &dyn ConicBackend,
    start: Option<(&BeamformerSet, f64)>,
    iters: &mut usize,
) -> Option<Solution> {
    let point = match start {
        Some((beams, theta)) => Some(warm_point(scenario, channel, cfg, beams, theta, opts.theta_min).ok()?),
        None => None,
    };
    let sol = solve_with(scenario, channel, cfg, opts, backend, point).ok()?;
    *iters += sol.iterations();
    Some(sol)
}

/// Solves every requested scheme at one scenario, from the default starting
/// point when `cold` is set and from every solution in `seeds` (solutions of
/// neighbouring scenarios). RSMA is also restarted from this point's SDMA
/// and NOMA solutions. The best recovered value is kept.
pub fn solve_point(
    scenario: &Scenario,
    schemes: &[SchemeKind],
    opts: &SolverOptions,
    backend: &dyn ConicBackend,
    seeds: &[(SchemeKind, &Solution)],
    cold: bool,
) -> Vec<PointOutcome> {
    let infeasible = |scheme, e: Error, wall_ms| PointOutcome {
        scheme,
        infeasible: matches!(e, Error::Infeasible(_)),
        solution: Err(e.to_string()),
        wall_ms,
        iters: 0,
    };
    let channel = match channel_matrix(scenario).and_then(|ch| {
        theta_cap_with(scenario, &ch)?;
        optical_headroom(&scenario.led, scenario.num_leds())?;
        Ok(ch)
    }) {
        Ok(ch) => ch,
        Err(e) => {
            let msg = e.to_string();
            let inf = matches!(e, Error::Infeasible(_));
            return schemes
                .iter()
                .map(|s| PointOutcome {
                    scheme: *s,
                    infeasible: inf,
                    solution: Err(msg.clone()),
                    wall_ms: 0.0,
                    iters: 0,
                })
                .collect();
        }
    };

    let mut solved: Vec<(SchemeKind, PointOutcome)> = Vec::new();
    let order: Vec<SchemeKind> = [SchemeKind::Sdma, SchemeKind::Noma, SchemeKind::Rsma]
        .into_iter()
        .filter(|k| schemes.contains(k) || (*k != SchemeKind::Rsma && schemes.contains(&SchemeKind::Rsma)))
        .collect();
    for kind in order {
        let cfg = SchemeConfig::for_channel(kind, &channel);
        let clock = Instant::now();
        let mut iters = 0;
        let mut best = None;
        if cold {
            match solve_with(scenario, &channel, &cfg, opts, backend, None) {
                Ok(s) => {
                    iters += s.iterations();
                    best = Some(s);
                }
                Err(e @ Error::Infeasible(_)) => {
                    solved.push((kind, infeasible(kind, e, clock.elapsed().as_secs_f64() * 1e3)));
                    continue;
                }
                Err(_) => {}
            }
        }
        let mut starts: Vec<(BeamformerSet, f64)> = seeds
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, s)| (s.beamformers.clone(), THETA_FROM_CAP))
            .collect();
        if kind == SchemeKind::Rsma {
            for (k, out) in &solved {
                if let Ok(s) = &out.solution {
                    let beams = if *k == SchemeKind::Noma {
                        noma_as_rsma(s)
                    } else {
                        s.beamformers.clone()
                    };
                    starts.push((beams, THETA_FROM_CAP));
                }
            }
        }
        if kind == SchemeKind::Rsma {
            for (k, out) in &solved {
                if let (SchemeKind::Sdma, Ok(s)) = (k, &out.solution) {
                    let alt = silent_common(s, scenario, &channel);
                    best = Some(match best {
                        Some(b) => better(b, alt),
                        None => alt,
                    });
                }
            }
        }
        for (beams, theta) in &starts {
            if let Some(s) = run_start(scenario, &channel, &cfg, opts, backend, Some((beams, *theta)), &mut iters) {
                best = Some(match best {
                    Some(b) => better(b, s),
                    None => s,
                });
            }
        }
        let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        let outcome = PointOutcome {
            scheme: kind,
            solution: best.ok_or_else(|| "no start produced a solution".to_string()),
            infeasible: false,
            wall_ms,
            iters,
        };
        solved.push((kind, outcome));
    }
    schemes
        .iter()
        .filter_map(|k| solved.iter().find(|(s, _)| s == k).map(|(_, o)| o.clone()))
        .collect()
}

fn sweep_scenario(spec: &SweepSpec, seed: u64) -> Scenario {
    match spec.random_users {
        Some(count) => crate::scenario::sample_users(&spec.scenario, count, seed),
        None => spec.scenario.clone(),
    }
}

/// Runs the sweep with the default Clarabel backend.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, &ClarabelBackend::default())
}

/// Every grid point is first solved independently in parallel. With
/// continuation enabled, points are then revisited from the strictest to the
/// most permissive, each warm-started from the best solution of the stricter
/// points already visited.
pub fn run_sweep_with(spec: &SweepSpec, backend: &dyn ConicBackend) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let base = sweep_scenario(spec, seed);
        let opts = SolverOptions {
            seed,
            ..spec.options.clone()
        };
        let scenarios: Vec<Scenario> = spec.grid.iter().map(|v| spec.axis.apply(&base, *v)).collect();
        let mut outcomes: Vec<Vec<PointOutcome>> = scenarios
            .par_iter()
            .map(|s| solve_point(s, &spec.schemes, &opts, backend, &[], true))
            .collect();

        if spec.continuation {
            let mut order: Vec<usize> = (0..scenarios.len()).collect();
            order.sort_by(|a, b| {
                spec.axis
                    .looseness(&scenarios[*a])
                    .total_cmp(&spec.axis.looseness(&scenarios[*b]))
                    .then(a.cmp(b))
            });
            // permissive to strict first (solutions are shrunk to fit), then
            // strict to permissive so that the last word goes to the
            // direction in which every carried solution stays feasible
            let backward: Vec<usize> = order.iter().rev().copied().collect();
            continuation_pass(spec, &scenarios, &backward, &mut outcomes, &opts, backend);
            continuation_pass(spec, &scenarios, &order, &mut outcomes, &opts, backend);
        }

        for (value, outs) in spec.grid.iter().zip(&outcomes) {
            rows.extend(outs.iter().map(|o| o.row(*value, seed)));
        }
    }
    Ok(SweepResult {
        axis: spec.axis,
        rows,
    })
}

/// Revisits the points in `visit` order, warm-starting each scheme from the
/// best solution seen so far on this pass.
fn continuation_pass(
    spec: &SweepSpec,
    scenarios: &[Scenario],
    visit: &[usize],
    outcomes: &mut [Vec<PointOutcome>],
    opts: &SolverOptions,
    backend: &dyn ConicBackend,
) {
    let mut carried: Vec<Option<Solution>> = vec![None; spec.schemes.len()];
    for &i in visit {
        let seeds: Vec<(SchemeKind, &Solution)> = spec
            .schemes
            .iter()
            .zip(&carried)
            .filter_map(|(k, c)| c.as_ref().map(|s| (*k, s)))
            .collect();
        if !seeds.is_empty() {
            let again = solve_point(&scenarios[i], &spec.schemes, opts, backend, &seeds, false);
            for (old, new) in outcomes[i].iter_mut().zip(again) {
                merge(old, new);
            }
        }
        for (slot, out) in carried.iter_mut().zip(&outcomes[i]) {
            if let Ok(s) = &out.solution {
                *slot = Some(s.clone());
            }
        }
    }
}

fn merge(old: &mut PointOutcome, new: PointOutcome) {
    old.wall_ms += new.wall_ms;
    old.iters += new.iters;
    if let Ok(n) = new.solution {
        let replace = match &old.solution {
            Ok(o) => n.mmf_value > o.mmf_value + 1e-12,
            Err(_) => true,
        };
        if replace {
            old.solution = Ok(n);
            old.infeasible = false;
        }
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "axis_value",
    "scheme",
    "mmf_rate",
    "theta",
    "iters",
    "penalty_residual",
    "status",
    "wall_ms",
    "seed",
    "user_rates",
];

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        let users: Vec<String> = r.user_rates.iter().map(|v| format!("{v:.10e}")).collect();
        w.write_record([
            format!("{}", r.axis_value),
            r.scheme.to_string(),
            format!("{:.10e}", r.mmf_rate),
            format!("{:.10e}", r.theta),
            r.iters.to_string(),
            format!("{:.6e}", r.penalty_residual),
            r.status.clone(),
            format!("{:.3}", r.wall_ms),
            r.seed.to_string(),
            users.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(result, std::io::BufWriter::new(file))
}

fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// Every way of writing `total` as an ordered sum of `parts` non-negative
/// integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Brute-force lower bound on the MMF optimum of a small instance. Beam
/// directions are fixed (matched filters for the private streams, the
/// dominant direction of `Σ_k H_k` for the common stream); the per-stream
/// power scales, θ and the split of the common rate are searched on grids
/// with `resolution` steps, and every candidate is checked against the
/// transmit and harvesting constraints.
pub fn oracle_grid(scenario: &Scenario, scheme: &SchemeConfig, resolution: usize) -> Result<f64> {
    let resolution = resolution.max(1);
    let channel = channel_matrix(scenario)?;
    let cap = theta_cap_with(scenario, &channel)?;
    optical_headroom(&scenario.led, scenario.num_leds())?;
    let k = channel.num_users();
    let n = channel.num_leds();
    scheme.validate(k)?;
    let params = StreamParams::for_scenario(scenario);
    let bias = dc_bias(&scenario.led, n);

    let mut dirs = BeamformerSet::zeros(n, k, bias);
    for u in 0..k {
        dirs.streams[u + 1] = unit(channel.user(u));
    }
    if scheme.kind == SchemeKind::Rsma {
        let total = channel.grams.iter().fold(DMatrix::zeros(n, n), |a, g| a + g);
        let (l, u) = principal_eigen(&total);
        if l > 0.0 {
            dirs.streams[0] = u;
        }
    }
    // largest scale of each stream on its own
    let max_scale: Vec<f64> = (0..=k)
        .map(|i| {
            let mut alone = BeamformerSet::zeros(n, k, bias);
            alone.streams[i] = dirs.streams[i].clone();
            if alone.streams[i].norm() == 0.0 {
                return 0.0;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            while check_with(&alone.scaled(hi), scenario, &params, 0.0).satisfied() && hi < 1e6 {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if check_with(&alone.scaled(mid), scenario, &params, 0.0).satisfied() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        })
        .collect();

    let theta_hi = cap.min(1.0);
    let theta_min = crate::subproblem::THETA_MIN;
    let thetas: Vec<f64> = (0..=resolution)
        .map(|j| theta_min + (theta_hi - theta_min) * j as f64 / resolution as f64)
        .collect();
    let splits = compositions(resolution, k);
    let mut best = 0.0f64;
    for levels in compositions_box(resolution, k + 1) {
        let mut beams = dirs.clone();
        for (i, l) in levels.iter().enumerate() {
            beams.streams[i] *= max_scale[i] * *l as f64 / resolution as f64;
        }
        if !check_with(&beams, scenario, &params, 0.0).satisfied() {
            continue;
        }
        let powers = received_powers(&channel, &beams);
        let rates = slot_rates(scheme, &powers, &params, scenario.noise_power);
        for &theta in &thetas {
            let alloc = allocation(scheme, k, theta, &rates);
            if scheme.kind == SchemeKind::Rsma {
                let budget = alloc.common_capacity().max(0.0);
                for split in &splits {
                    let v = (0..k)
                        .map(|u| alloc.private_rates[u] + budget * split[u] as f64 / resolution as f64)
                        .fold(f64::INFINITY, f64::min);
                    best = best.max(v);
                }
            } else {
                best = best.max(mmf_rate(&alloc));
            }
        }
    }
    Ok(best)
}

/// Every vector of `len` integers in `0..=resolution`.
fn compositions_box(resolution: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=resolution).map(move |l| {
                    let mut w = v.clone();
                    w.push(l);
                    w
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests;
