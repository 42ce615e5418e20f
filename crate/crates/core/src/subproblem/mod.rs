//! Convex subproblem solved at every outer iteration.
//!
//! Precoders are lifted to PSD matrices `P_i = p_i p_iᵀ` and the rank
//! constraint is moved into the objective as the penalty
//! `ρ Σ_i (Tr P_i − ξ_iᵀ P_i ξ_i)`. Each rate bound `log S(P) − log D(P) ≥ 2v`
//! keeps its concave numerator and replaces the interference log by its
//! tangent, which turns the constraint into an exponential cone. Each
//! time-split product `θ v` is written as `¼(θ+v)² − ¼(θ−v)²`; the convex
//! square is replaced by its tangent, leaving a rotated second-order cone.
//!
//! Rate constraints are built in normalized form: the exponential cone bounds
//! `S(P)/S(P^[m])`, which is O(1) near the expansion point despite the tiny
//! absolute channel gains.

pub mod backend;
pub mod program;

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelMatrix;
use crate::energy::theta_cap_with;
use crate::error::{Error, Result};
use crate::linalg::{principal_eigen, rank_one_gap};
use crate::rates::{lifted_powers, stream_rate};
use crate::scenario::Scenario;
use crate::schemes::{apply_scheme, rate_terms, Rhs, SchemeConfig};
use crate::signal::{optical_headroom, BeamformerSet, StreamParams};

use program::{AffineExpr, ConeKind, ConicProgram, Constraint, RateSlot, Scalar, Tag};

/// Open lower bound `θ > 0` replaced by this floor.
pub const THETA_MIN: f64 = 1e-6;

/// Expansion point of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    /// Lifted precoders, index 0 is the common stream.
    pub lifted: Vec<DMatrix<f64>>,
    /// Unit principal eigenvectors of `lifted`.
    pub xi: Vec<DVector<f64>>,
    pub theta: f64,
    pub slacks: BTreeMap<RateSlot, f64>,
}

impl LinearizationPoint {
    pub fn from_lifted(lifted: Vec<DMatrix<f64>>, theta: f64, slacks: BTreeMap<RateSlot, f64>) -> Self {
        let xi = lifted.iter().map(principal_direction).collect();
        Self {
            lifted,
            xi,
            theta,
            slacks,
        }
    }

    pub fn from_beams(beams: &BeamformerSet, theta: f64, slacks: BTreeMap<RateSlot, f64>) -> Self {
        let lifted = beams.streams.iter().map(|p| p * p.transpose()).collect();
        Self::from_lifted(lifted, theta, slacks)
    }

    pub fn num_streams(&self) -> usize {
        self.lifted.len()
    }
}

/// Unit principal eigenvector, or the first basis vector for a zero matrix.
fn principal_direction(m: &DMatrix<f64>) -> DVector<f64> {
    let (l, u) = principal_eigen(m);
    if l > 0.0 {
        u
    } else {
        let mut e = DVector::zeros(m.nrows());
        e[0] = 1.0;
        e
    }
}

/// `Σ_i (Tr P_i − λ_max(P_i))`.
pub fn penalty_residual(lifted: &[DMatrix<f64>]) -> f64 {
    lifted.iter().map(rank_one_gap).sum()
}

/// `ab` written as a difference of squares, `¼(a+b)² − ¼(a−b)²`.
///
/// The sums and squares are carried with their rounding errors, so the
/// result stays accurate to a few ulps of `ab` even when `|a| ≫ |b|` and the
/// two squares nearly cancel.
pub fn bilinear_identity(a: f64, b: f64) -> f64 {
    let square = |(h, l): (f64, f64)| {
        let p = h * h;
        (p, h.mul_add(h, -p) + 2.0 * h * l)
    };
    let (sp, se) = square(two_sum(a, b));
    let (dp, de) = square(two_sum(a, -b));
    0.25 * ((sp - dp) + (se - de))
}

/// `x + y` as a rounded sum and its exact rounding error.
fn two_sum(x: f64, y: f64) -> (f64, f64) {
    let s = x + y;
    let v = s - x;
    (s, (x - (s - v)) + (y - v))
}

/// Which interference log is being linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// All private streams interfere.
    Common,
    /// All private streams except the user's own.
    Private,
}

/// Tangent of `log₂(2πσ² + 2π Σ_j ε_j Tr(H_k P_j))`, affine in the
/// interferers' lifted precoders: `constant + Σ_j w_j Tr(H_k P_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedLog {
    pub user: usize,
    pub constant: f64,
    pub weights: Vec<(usize, f64)>,
    /// Value of the interference-plus-noise term at the expansion point,
    /// divided by 2πσ².
    pub normalized_at_point: f64,
}

impl LinearizedLog {
    pub fn eval(&self, gram: &DMatrix<f64>, lifted: &[DMatrix<f64>]) -> f64 {
        self.constant
            + self
                .weights
                .iter()
                .map(|(j, w)| w * gram.dot(&lifted[*j]))
                .sum::<f64>()
    }
}

/// Exact interference log, the concave function the tangent bounds.
pub fn interference_log(
    gram: &DMatrix<f64>,
    lifted: &[DMatrix<f64>],
    params: &StreamParams,
    sigma2: f64,
    interferers: &[usize],
) -> f64 {
    let d: f64 = 2.0 * PI * sigma2
        + interferers
            .iter()
            .map(|j| 2.0 * PI * params.variance[*j] * gram.dot(&lifted[*j]))
            .sum::<f64>();
    d.log2()
}

pub fn linearize_interference(
    point: &LinearizationPoint,
    channel: &ChannelMatrix,
    params: &StreamParams,
    sigma2: f64,
    user: usize,
    interferers: &[usize],
) -> LinearizedLog {
    let gram = &channel.grams[user];
    let noise = 2.0 * PI * sigma2;
    let powers: Vec<(usize, f64)> = interferers
        .iter()
        .map(|j| (*j, gram.dot(&point.lifted[*j])))
        .collect();
    let d = noise
        + powers
            .iter()
            .map(|(j, g)| 2.0 * PI * params.variance[*j] * g)
            .sum::<f64>();
    let weights: Vec<(usize, f64)> = interferers
        .iter()
        .map(|j| (*j, 2.0 * PI * params.variance[*j] / (d * LN_2)))
        .collect();
    let shift: f64 = weights.iter().zip(&powers).map(|((_, w), (_, g))| w * g).sum();
    LinearizedLog {
        user,
        constant: d.log2() - shift,
        weights,
        normalized_at_point: d / noise,
    }
}

/// Tangent of the interference log of the common (all private streams) or
/// private (all but user k's) rate bound.
pub fn linearize_f(
    point: &LinearizationPoint,
    channel: &ChannelMatrix,
    params: &StreamParams,
    sigma2: f64,
    user: usize,
    variant: Variant,
) -> LinearizedLog {
    let k = point.num_streams() - 1;
    let interferers: Vec<usize> = match variant {
        Variant::Common => (1..=k).collect(),
        Variant::Private => (1..=k).filter(|j| *j != user + 1).collect(),
    };
    linearize_interference(point, channel, params, sigma2, user, &interferers)
}

/// Tangent `G(θ, v) = ½(θ₀+v₀)(θ+v) − ¼(θ₀+v₀)²` of `¼(θ+v)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareTangent {
    pub slope: f64,
    pub constant: f64,
}

impl SquareTangent {
    pub fn eval(&self, theta: f64, v: f64) -> f64 {
        self.slope * (theta + v) + self.constant
    }
}

pub fn linearize_g(theta0: f64, v0: f64) -> SquareTangent {
    let s = theta0 + v0;
    SquareTangent {
        slope: 0.5 * s,
        constant: -0.25 * s * s,
    }
}

/// Fixed data shared by every subproblem of one solve.
#[derive(Debug, Clone)]
pub struct Subproblem<'a> {
    pub scenario: &'a Scenario,
    pub channel: &'a ChannelMatrix,
    pub params: StreamParams,
    pub sigma2: f64,
    pub theta_cap: f64,
    pub theta_min: f64,
    pub headroom: f64,
}

impl<'a> Subproblem<'a> {
    pub fn new(scenario: &'a Scenario, channel: &'a ChannelMatrix, theta_min: f64) -> Result<Self> {
        let theta_cap = theta_cap_with(scenario, channel)?;
        if theta_cap <= 0.0 || theta_cap < theta_min {
            return Err(Error::Infeasible(format!(
                "energy floor leaves no decoding time (θ cap {theta_cap:.3e})"
            )));
        }
        let headroom = optical_headroom(&scenario.led, scenario.num_leds())?;
        Ok(Self {
            scenario,
            channel,
            params: StreamParams::for_scenario(scenario),
            sigma2: scenario.noise_power,
            theta_cap,
            theta_min,
            headroom,
        })
    }

    pub fn num_users(&self) -> usize {
        self.channel.num_users()
    }

    pub fn num_streams(&self) -> usize {
        self.num_users() + 1
    }

    /// Rate of `target` at `user` over lifted precoders.
    pub fn lifted_rate(&self, lifted: &[DMatrix<f64>], user: usize, target: usize, undecoded: &[usize]) -> f64 {
        let powers = lifted_powers(&self.channel.grams[user], lifted);
        stream_rate(&powers, &self.params, self.sigma2, target, undecoded.iter().copied())
    }

    /// Exponential-cone form of
    /// `log₂(2πσ² + Σ_{i∈U} τ_i Tr(H P_i)) − F(P) ≥ 2 v`.
    pub fn rate_constraint(
        &self,
        point: &LinearizationPoint,
        slot: RateSlot,
        user: usize,
        target: usize,
        undecoded: &[usize],
    ) -> Constraint {
        let interferers: Vec<usize> = undecoded.iter().copied().filter(|i| *i != target).collect();
        let f = linearize_interference(point, self.channel, &self.params, self.sigma2, user, &interferers);
        let gram = &self.channel.grams[user];
        let noise = 2.0 * PI * self.sigma2;
        // x = ln2·(2v + F − log₂ 2πσ²)
        let shift: f64 = f
            .weights
            .iter()
            .map(|(j, w)| w * gram.dot(&point.lifted[*j]))
            .sum();
        let mut x = AffineExpr::scalar(Scalar::Slack(slot)).scaled(2.0 * LN_2);
        x.constant = LN_2 * (f.normalized_at_point.log2() - shift);
        for (j, w) in &f.weights {
            x = x.plus_inner(*j, gram, LN_2 * w);
        }
        // scale the signal side by its value at the point so both cone
        // entries stay O(1) near the expansion point
        let z0 = 1.0
            + undecoded
                .iter()
                .map(|i| self.params.tau[*i] * gram.dot(&point.lifted[*i]) / noise)
                .sum::<f64>();
        x.constant -= z0.ln();
        let mut z = AffineExpr::constant(1.0 / z0);
        for i in undecoded {
            z = z.plus_inner(*i, gram, self.params.tau[*i] / (noise * z0));
        }
        Constraint {
            tag: Tag::Rate(slot),
            cone: ConeKind::Exponential,
            exprs: vec![x.compact(), AffineExpr::constant(1.0), z.compact()],
        }
    }

    /// Second-order-cone form of `G(θ, v) − ¼(θ − v)² ≥ rhs`.
    pub fn bilinear_constraint(&self, point: &LinearizationPoint, slot: RateSlot, rhs: AffineExpr) -> Constraint {
        let v0 = self.slack_at(point, slot);
        let g = linearize_g(point.theta, v0);
        // L = G − rhs, then (θ−v)² ≤ 4L ⇔ ‖(θ−v, L−1)‖ ≤ L+1
        let l = AffineExpr::constant(g.constant)
            .plus(Scalar::Theta, g.slope)
            .plus(Scalar::Slack(slot), g.slope)
            .add(&rhs.scaled(-1.0));
        let diff = AffineExpr::scalar(Scalar::Theta).plus(Scalar::Slack(slot), -1.0);
        Constraint {
            tag: Tag::Bilinear(slot),
            cone: ConeKind::SecondOrder,
            exprs: vec![
                l.clone().offset(1.0).compact(),
                diff,
                l.offset(-1.0).compact(),
            ],
        }
    }

    /// Slack value stored in the point, or the exact rate there.
    pub fn slack_at(&self, point: &LinearizationPoint, slot: RateSlot) -> f64 {
        if let Some(v) = point.slacks.get(&slot) {
            return *v;
        }
        let k = self.num_users();
        let (user, target, undecoded): (usize, usize, Vec<usize>) = match slot {
            RateSlot::Common(u) => (u, 0, (0..=k).collect()),
            RateSlot::Private(u) => (u, u + 1, (1..=k).collect()),
            RateSlot::Sic { owner, decoder } => (decoder, owner + 1, (1..=k).collect()),
        };
        self.lifted_rate(&point.lifted, user, target, &undecoded)
    }

    pub fn rhs_expr(&self, rhs: Rhs) -> AffineExpr {
        match rhs {
            Rhs::SumShares => (0..self.num_users())
                .fold(AffineExpr::constant(0.0), |e, k| e.plus(Scalar::Share(k), 1.0)),
            Rhs::ObjectiveMinusShare(k) => {
                AffineExpr::scalar(Scalar::Objective).plus(Scalar::Share(k), -1.0)
            }
            Rhs::Objective => AffineExpr::scalar(Scalar::Objective),
        }
    }

    /// The RSMA program at `point`, before any scheme restriction.
    pub fn build_rsma(&self, point: &LinearizationPoint, rho: f64) -> ConicProgram {
        let k = self.num_users();
        let n = self.channel.num_leds();
        let streams = self.num_streams();
        let mut scalars = vec![Scalar::Objective, Scalar::Theta];
        scalars.extend((0..k).map(Scalar::Share));
        let terms = rate_terms(&SchemeConfig::rsma(), k);
        scalars.extend(terms.iter().map(|t| Scalar::Slack(t.slot)));

        let mut objective = AffineExpr::scalar(Scalar::Objective);
        let eye = DMatrix::<f64>::identity(n, n);
        for i in 0..streams {
            let xi = &point.xi[i];
            let w = &eye - xi * xi.transpose();
            objective = objective.plus_inner(i, &w, rho);
        }

        let mut constraints = Vec::new();
        for t in &terms {
            constraints.push(self.rate_constraint(point, t.slot, t.user, t.target, &t.undecoded));
            constraints.push(self.bilinear_constraint(point, t.slot, self.rhs_expr(t.rhs)));
        }
        let h2 = self.headroom * self.headroom;
        for led in 0..n {
            let mut e = AffineExpr::constant(h2);
            for i in 0..streams {
                e = e.plus_diag(i, led, -self.params.amplitude[i].powi(2));
            }
            constraints.push(Constraint {
                tag: Tag::Optical(led),
                cone: ConeKind::NonNegative,
                exprs: vec![e],
            });
        }
        let mut power = AffineExpr::constant(self.scenario.transmit_power);
        for i in 0..streams {
            for led in 0..n {
                power = power.plus_diag(i, led, -self.params.variance[i]);
            }
        }
        constraints.push(Constraint {
            tag: Tag::Power,
            cone: ConeKind::NonNegative,
            exprs: vec![power],
        });
        constraints.push(Constraint {
            tag: Tag::ThetaFloor,
            cone: ConeKind::NonNegative,
            exprs: vec![AffineExpr::scalar(Scalar::Theta).offset(-self.theta_min)],
        });
        constraints.push(Constraint {
            tag: Tag::ThetaCap,
            cone: ConeKind::NonNegative,
            exprs: vec![AffineExpr::constant(self.theta_cap.min(1.0)).plus(Scalar::Theta, -1.0)],
        });
        for kk in 0..k {
            constraints.push(Constraint {
                tag: Tag::ShareFloor(kk),
                cone: ConeKind::NonNegative,
                exprs: vec![AffineExpr::scalar(Scalar::Share(kk))],
            });
        }
        ConicProgram {
            dim: n,
            num_streams: streams,
            psd_streams: (0..streams).collect(),
            scalars,
            objective: objective.compact(),
            constraints,
        }
    }

    /// The subproblem for `scheme` at `point`.
    pub fn build(&self, point: &LinearizationPoint, scheme: &SchemeConfig, rho: f64) -> Result<ConicProgram> {
        let base = self.build_rsma(point, rho);
        apply_scheme(base, scheme, self, point)
    }
}

/// Builds the convex subproblem at `point` with the default θ floor.
pub fn build_subproblem(
    point: &LinearizationPoint,
    scenario: &Scenario,
    channel: &ChannelMatrix,
    scheme: &SchemeConfig,
    rho: f64,
) -> Result<ConicProgram> {
    Subproblem::new(scenario, channel, THETA_MIN)?.build(point, scheme, rho)
}

#[cfg(test)]
mod tests;
