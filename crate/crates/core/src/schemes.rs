//! RSMA and its two special cases.
//!
//! * SDMA switches the common stream off: `P_0 = 0` and `c_k = 0`.
//! * NOMA also drops the common stream and decodes the private streams by
//!   successive interference cancellation in a fixed order. The user at
//!   position j of the order decodes, and cancels, the streams of every
//!   user at positions before j, then decodes its own stream; streams at
//!   positions after j stay as interference. A stream's rate is limited by
//!   every user that has to decode it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::rates::RateAllocation;
use crate::subproblem::program::{ConicProgram, RateSlot, Scalar, Tag};
use crate::subproblem::{LinearizationPoint, Subproblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    Rsma,
    Sdma,
    Noma,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Rsma, SchemeKind::Sdma, SchemeKind::Noma];
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Rsma => "rsma",
            SchemeKind::Sdma => "sdma",
            SchemeKind::Noma => "noma",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsma" => Ok(SchemeKind::Rsma),
            "sdma" => Ok(SchemeKind::Sdma),
            "noma" => Ok(SchemeKind::Noma),
            other => Err(Error::invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// SIC order as a list of user indices; only used by NOMA.
    pub noma_order: Vec<usize>,
}

impl SchemeConfig {
    pub fn rsma() -> Self {
        Self {
            kind: SchemeKind::Rsma,
            noma_order: Vec::new(),
        }
    }

    pub fn sdma() -> Self {
        Self {
            kind: SchemeKind::Sdma,
            noma_order: Vec::new(),
        }
    }

    pub fn noma(order: Vec<usize>) -> Self {
        Self {
            kind: SchemeKind::Noma,
            noma_order: order,
        }
    }

    /// Scheme with the default SIC order for `channel` when it is NOMA.
    pub fn for_channel(kind: SchemeKind, channel: &ChannelMatrix) -> Self {
        match kind {
            SchemeKind::Rsma => Self::rsma(),
            SchemeKind::Sdma => Self::sdma(),
            SchemeKind::Noma => Self::noma(default_noma_order(channel)),
        }
    }

    pub fn validate(&self, num_users: usize) -> Result<()> {
        if self.kind != SchemeKind::Noma {
            return Ok(());
        }
        let mut seen = vec![false; num_users];
        if self.noma_order.len() != num_users {
            return Err(Error::InvalidPermutation(format!(
                "order has {} entries for {num_users} users",
                self.noma_order.len()
            )));
        }
        for &u in &self.noma_order {
            if u >= num_users || seen[u] {
                return Err(Error::InvalidPermutation(format!(
                    "{:?} is not a permutation of 0..{num_users}",
                    self.noma_order
                )));
            }
            seen[u] = true;
        }
        Ok(())
    }
}

/// Users by descending channel norm, ties by index.
pub fn default_noma_order(channel: &ChannelMatrix) -> Vec<usize> {
    let norms: Vec<f64> = (0..channel.num_users())
        .map(|k| channel.user(k).norm())
        .collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|a, b| norms[*b].total_cmp(&norms[*a]).then(a.cmp(b)));
    order
}

/// Right-hand side of a time-split rate constraint `θ v ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rhs {
    /// `Σ_i c_i`
    SumShares,
    /// `t − c_k`
    ObjectiveMinusShare(usize),
    /// `t`
    Objective,
}

/// One achievable-rate bound of a scheme: stream `target` decoded at `user`
/// while the streams in `undecoded` are still present.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTerm {
    pub slot: RateSlot,
    pub user: usize,
    pub target: usize,
    pub undecoded: Vec<usize>,
    pub rhs: Rhs,
}

pub fn rate_terms(cfg: &SchemeConfig, num_users: usize) -> Vec<RateTerm> {
    let k = num_users;
    let common = (0..k).map(|u| RateTerm {
        slot: RateSlot::Common(u),
        user: u,
        target: 0,
        undecoded: (0..=k).collect(),
        rhs: Rhs::SumShares,
    });
    let private = |rhs: fn(usize) -> Rhs| {
        (0..k).map(move |u| RateTerm {
            slot: RateSlot::Private(u),
            user: u,
            target: u + 1,
            undecoded: (1..=k).collect(),
            rhs: rhs(u),
        })
    };
    match cfg.kind {
        SchemeKind::Rsma => common.chain(private(Rhs::ObjectiveMinusShare)).collect(),
        SchemeKind::Sdma => private(|_| Rhs::Objective).collect(),
        SchemeKind::Noma => {
            let order = &cfg.noma_order;
            let mut terms = Vec::new();
            for (pos, &owner) in order.iter().enumerate() {
                let undecoded: Vec<usize> = order[pos..].iter().map(|u| u + 1).collect();
                for &decoder in &order[pos..] {
                    terms.push(RateTerm {
                        slot: RateSlot::Sic { owner, decoder },
                        user: decoder,
                        target: owner + 1,
                        undecoded: undecoded.clone(),
                        rhs: Rhs::Objective,
                    });
                }
            }
            terms
        }
    }
}

/// Turns an RSMA subproblem into the subproblem of `cfg`.
pub fn apply_scheme(
    mut program: ConicProgram,
    cfg: &SchemeConfig,
    sub: &Subproblem<'_>,
    point: &LinearizationPoint,
) -> Result<ConicProgram> {
    let k = sub.num_users();
    cfg.validate(k)?;
    if cfg.kind == SchemeKind::Rsma {
        return Ok(program);
    }
    program.remove_where(|t| {
        matches!(
            t,
            Tag::Rate(RateSlot::Common(_))
                | Tag::Bilinear(RateSlot::Common(_))
                | Tag::ShareFloor(_)
        )
    });
    program.zero_stream(0);
    for u in 0..k {
        program.fix_scalar(Scalar::Share(u), 0.0);
    }
    if cfg.kind == SchemeKind::Noma {
        program.remove_where(|t| {
            matches!(t, Tag::Rate(RateSlot::Private(_)) | Tag::Bilinear(RateSlot::Private(_)))
        });
        for term in rate_terms(cfg, k) {
            program.scalars.push(Scalar::Slack(term.slot));
            program
                .constraints
                .push(sub.rate_constraint(point, term.slot, term.user, term.target, &term.undecoded));
            program
                .constraints
                .push(sub.bilinear_constraint(point, term.slot, sub.rhs_expr(term.rhs)));
        }
    }
    program.prune_scalars();
    Ok(program)
}

/// User rates of a scheme from the exact (unscaled) bound of every rate term.
pub fn allocation(
    cfg: &SchemeConfig,
    num_users: usize,
    theta: f64,
    slot_rates: &BTreeMap<RateSlot, f64>,
) -> RateAllocation {
    let k = num_users;
    let get = |s: RateSlot| slot_rates.get(&s).copied().unwrap_or(0.0);
    match cfg.kind {
        SchemeKind::Rsma => {
            let common: Vec<f64> = (0..k).map(|u| get(RateSlot::Common(u))).collect();
            let private: Vec<f64> = (0..k).map(|u| get(RateSlot::Private(u))).collect();
            RateAllocation::water_filled(theta, &common, &private)
        }
        SchemeKind::Sdma => {
            let private: Vec<f64> = (0..k).map(|u| get(RateSlot::Private(u))).collect();
            RateAllocation::private_only(theta, &private)
        }
        SchemeKind::Noma => {
            let mut own = vec![f64::INFINITY; k];
            for (slot, r) in slot_rates {
                if let RateSlot::Sic { owner, .. } = slot {
                    own[*owner] = own[*owner].min(*r);
                }
            }
            let own: Vec<f64> = own.into_iter().map(|r| if r.is_finite() { r } else { 0.0 }).collect();
            RateAllocation::private_only(theta, &own)
        }
    }
}

/// Exact bound of every rate term of `cfg` for the given received powers
/// (`powers[k][i]` is the power of stream i at user k).
pub fn slot_rates(
    cfg: &SchemeConfig,
    powers: &[Vec<f64>],
    params: &crate::signal::StreamParams,
    sigma2: f64,
) -> BTreeMap<RateSlot, f64> {
    rate_terms(cfg, powers.len())
        .into_iter()
        .map(|t| {
            let r = crate::rates::stream_rate(
                &powers[t.user],
                params,
                sigma2,
                t.target,
                t.undecoded.iter().copied(),
            );
            (t.slot, r)
        })
        .collect()
}
