//! Closed-form achievable-rate lower bounds for amplitude-limited optical
//! streams, time-splitting scaling and the max-min objective.
//!
//! All bounds are written over received stream powers `g_i = |h_kᵀ p_i|²`
//! (or `Tr(H_k P_i)` for lifted precoders), so the vector and the
//! semidefinite forms share one implementation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::signal::{BeamformerSet, StreamParams};

/// Received power of every stream at a user with channel `h`.
pub fn stream_powers(h: &DVector<f64>, beams: &BeamformerSet) -> Vec<f64> {
    beams.streams.iter().map(|p| h.dot(p).powi(2)).collect()
}

/// Received power of every lifted stream, `Tr(H P_i)`.
pub fn lifted_powers(gram: &DMatrix<f64>, lifted: &[DMatrix<f64>]) -> Vec<f64> {
    lifted.iter().map(|p| gram.dot(p)).collect()
}

/// Rate bound for decoding stream `target` while the streams in `undecoded`
/// (which contains `target`) are still superimposed; already-decoded streams
/// are cancelled.
pub fn stream_rate(
    powers: &[f64],
    params: &StreamParams,
    sigma2: f64,
    target: usize,
    undecoded: impl IntoIterator<Item = usize>,
) -> f64 {
    let noise = 2.0 * PI * sigma2;
    let mut num = noise;
    let mut den = noise;
    for i in undecoded {
        num += params.tau[i] * powers[i];
        if i != target {
            den += 2.0 * PI * params.variance[i] * powers[i];
        }
    }
    0.5 * (num / den).log2()
}

/// Common-stream bound: every stream in the numerator, all private streams
/// as interference.
pub fn common_rate_from_powers(powers: &[f64], params: &StreamParams, sigma2: f64) -> f64 {
    stream_rate(powers, params, sigma2, 0, 0..powers.len())
}

/// Private-stream bound of user `k` after the common stream is removed.
pub fn private_rate_from_powers(
    powers: &[f64],
    params: &StreamParams,
    sigma2: f64,
    k: usize,
) -> f64 {
    stream_rate(powers, params, sigma2, k + 1, 1..powers.len())
}

pub fn common_rate_lb(
    h: &DVector<f64>,
    beams: &BeamformerSet,
    params: &StreamParams,
    sigma2: f64,
) -> f64 {
    common_rate_from_powers(&stream_powers(h, beams), params, sigma2)
}

pub fn private_rate_lb(
    h: &DVector<f64>,
    beams: &BeamformerSet,
    params: &StreamParams,
    sigma2: f64,
    k: usize,
) -> f64 {
    private_rate_from_powers(&stream_powers(h, beams), params, sigma2, k)
}

/// Rate of a stream that is only active for the decoding share `theta`.
pub fn ts_scale(rate: f64, theta: f64) -> f64 {
    debug_assert!(theta > 0.0 && theta <= 1.0);
    theta * rate
}

/// Time-split rates and the split of the common rate among users, in
/// bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocation {
    pub theta: f64,
    pub common_shares: Vec<f64>,
    /// `θ R_{k,p}`, clamped at zero.
    pub private_rates: Vec<f64>,
    /// `θ R_{k,c}`, clamped at zero.
    pub common_rates: Vec<f64>,
}

impl RateAllocation {
    /// Builds an allocation from raw (unscaled, possibly negative) bounds and
    /// splits the common rate to lift the weakest users first.
    pub fn water_filled(theta: f64, raw_common: &[f64], raw_private: &[f64]) -> Self {
        let private_rates: Vec<f64> = raw_private
            .iter()
            .map(|r| ts_scale(r.max(0.0), theta))
            .collect();
        let common_rates: Vec<f64> = raw_common
            .iter()
            .map(|r| ts_scale(r.max(0.0), theta))
            .collect();
        let budget = common_rates.iter().copied().fold(f64::INFINITY, f64::min);
        let budget = if budget.is_finite() { budget } else { 0.0 };
        let common_shares = water_fill(&private_rates, budget);
        Self {
            theta,
            common_shares,
            private_rates,
            common_rates,
        }
    }

    /// Allocation without a common stream.
    pub fn private_only(theta: f64, raw_private: &[f64]) -> Self {
        let k = raw_private.len();
        Self {
            theta,
            common_shares: vec![0.0; k],
            private_rates: raw_private
                .iter()
                .map(|r| ts_scale(r.max(0.0), theta))
                .collect(),
            common_rates: vec![0.0; k],
        }
    }

    pub fn totals(&self) -> Vec<f64> {
        self.common_shares
            .iter()
            .zip(&self.private_rates)
            .map(|(c, p)| c + p)
            .collect()
    }

    /// The common rate every user can decode, `min_k θ R_{k,c}`.
    pub fn common_capacity(&self) -> f64 {
        self.common_rates
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Σ c_k ≤ min_k θ R_{k,c}` and every share is non-negative.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let sum: f64 = self.common_shares.iter().sum();
        self.common_shares.iter().all(|c| *c >= -tol)
            && (sum <= tol || sum <= self.common_capacity() + tol)
    }
}

/// Splits `budget` over users so that `min_k (c_k + base_k)` is maximal.
fn water_fill(base: &[f64], budget: f64) -> Vec<f64> {
    if budget <= 0.0 || base.is_empty() {
        return vec![0.0; base.len()];
    }
    let mut sorted: Vec<f64> = base.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut level = sorted[0] + budget;
    let mut spent = 0.0;
    for (i, w) in sorted.windows(2).enumerate() {
        let filled = i + 1;
        let step = (w[1] - w[0]) * filled as f64;
        if spent + step >= budget {
            level = w[0] + (budget - spent) / filled as f64;
            break;
        }
        spent += step;
        level = w[1] + (budget - spent) / (filled + 1) as f64;
    }
    base.iter().map(|b| (level - b).max(0.0)).collect()
}

/// Worst user total rate.
pub fn mmf_rate(alloc: &RateAllocation) -> f64 {
    alloc
        .totals()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}
