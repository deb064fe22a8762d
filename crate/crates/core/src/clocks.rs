//! Offset estimation on a two-way channel versus a one-way observer.
//!
//! A measured interval in each direction is the shared delay plus
//! independent jitter, with the clock offset entering with opposite signs:
//! `m_ab = d0 + j_f + θ` and `m_ba = d0 + j_b − θ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub d0: f64,
    pub jitter_bound: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockPair {
    /// Offset of B's clock relative to A's.
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeSample {
    pub m_ab: f64,
    pub m_ba: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClockError {
    #[error("d0 must be finite and non-negative, got {0}")]
    Delay(f64),
    #[error("jitter bound must be finite and non-negative, got {0}")]
    Jitter(f64),
    #[error("offset must be finite, got {0}")]
    Offset(f64),
}

impl ChannelModel {
    pub fn new(d0: f64, jitter_bound: f64, seed: u64) -> Result<Self, ClockError> {
        let c = Self {
            d0,
            jitter_bound,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ClockError> {
        if !self.d0.is_finite() || self.d0 < 0.0 {
            return Err(ClockError::Delay(self.d0));
        }
        if !self.jitter_bound.is_finite() || self.jitter_bound < 0.0 {
            return Err(ClockError::Jitter(self.jitter_bound));
        }
        Ok(())
    }

    fn jitter(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.jitter_bound == 0.0 {
            0.0
        } else {
            rng.gen_range(-self.jitter_bound..=self.jitter_bound)
        }
    }

    fn draw(&self, clocks: ClockPair, rng: &mut ChaCha8Rng) -> ExchangeSample {
        let jf = self.jitter(rng);
        let jb = self.jitter(rng);
        ExchangeSample {
            m_ab: self.d0 + jf + clocks.theta,
            m_ba: self.d0 + jb - clocks.theta,
        }
    }
}

/// One round trip, deterministic in the channel seed.
pub fn sample_exchange(channel: &ChannelModel, clocks: ClockPair) -> ExchangeSample {
    channel.draw(clocks, &mut ChaCha8Rng::seed_from_u64(channel.seed))
}

/// `trials` independent round trips from one seeded stream.
pub fn sample_exchanges(
    channel: &ChannelModel,
    clocks: ClockPair,
    trials: usize,
) -> Vec<ExchangeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(channel.seed);
    (0..trials)
        .map(|_| channel.draw(clocks, &mut rng))
        .collect()
}

pub fn estimate_offset_bilateral(s: ExchangeSample) -> f64 {
    (s.m_ab - s.m_ba) / 2.0
}

pub fn estimate_rtt(s: ExchangeSample) -> f64 {
    s.m_ab + s.m_ba
}

/// Forward interval taken as the offset; biased by the full one-way delay.
pub fn estimate_offset_fito(m_ab: f64) -> f64 {
    m_ab
}

/// Pairwise offset estimates among three nodes A, B, C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub ab: f64,
    pub ba: f64,
    pub bc: f64,
    pub ac: f64,
    /// Estimate of a node against itself.
    pub aa: f64,
}

/// Measures each ordered link of the triangle with its own exchange.
pub fn measure_triangle(channel: &ChannelModel, theta_ab: f64, theta_bc: f64) -> Triangle {
    let mut rng = ChaCha8Rng::seed_from_u64(channel.seed);
    let mut est =
        |theta: f64| estimate_offset_bilateral(channel.draw(ClockPair { theta }, &mut rng));
    Triangle {
        ab: est(theta_ab),
        ba: est(-theta_ab),
        bc: est(theta_bc),
        ac: est(theta_ab + theta_bc),
        aa: est(0.0),
    }
}

/// Identity, inverse and composition laws, each within `2·j` per hop
/// involved.
pub fn offset_group_check(t: &Triangle, jitter_bound: f64) -> bool {
    let hop = 2.0 * jitter_bound;
    t.aa.abs() <= jitter_bound
        && (t.ab + t.ba).abs() <= hop
        && (t.ac - (t.ab + t.bc)).abs() <= 2.0 * hop
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub m_ab: f64,
    pub m_ba: f64,
    pub bilateral: f64,
    pub bilateral_error: f64,
    pub rtt: f64,
    pub fito: f64,
    pub fito_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub trials: usize,
    pub max_bilateral_error: f64,
    pub max_fito_error: f64,
    pub min_fito_error: f64,
    pub max_rtt_error: f64,
}

pub fn estimate_row(s: ExchangeSample, theta: f64) -> EstimateRow {
    let bilateral = estimate_offset_bilateral(s);
    let fito = estimate_offset_fito(s.m_ab);
    EstimateRow {
        m_ab: s.m_ab,
        m_ba: s.m_ba,
        bilateral,
        bilateral_error: bilateral - theta,
        rtt: estimate_rtt(s),
        fito,
        fito_error: fito - theta,
    }
}

pub fn sweep(
    channel: &ChannelModel,
    clocks: ClockPair,
    trials: usize,
) -> Result<(Vec<EstimateRow>, SweepSummary), ClockError> {
    channel.validate()?;
    if !clocks.theta.is_finite() {
        return Err(ClockError::Offset(clocks.theta));
    }
    let rows: Vec<EstimateRow> = sample_exchanges(channel, clocks, trials)
        .into_iter()
        .map(|s| estimate_row(s, clocks.theta))
        .collect();
    let abs_max = |f: &dyn Fn(&EstimateRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let summary = SweepSummary {
        trials,
        max_bilateral_error: abs_max(&|r| r.bilateral_error.abs()),
        max_fito_error: abs_max(&|r| r.fito_error.abs()),
        min_fito_error: rows
            .iter()
            .map(|r| r.fito_error.abs())
            .reduce(f64::min)
            .unwrap_or(0.0),
        max_rtt_error: abs_max(&|r| (r.rtt - 2.0 * channel.d0).abs()),
    };
    Ok((rows, summary))
}
