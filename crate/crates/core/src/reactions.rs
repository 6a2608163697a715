//! Bimolecular reaction kinetics and the reaction channels built on them.
//!
//! A channel hosting `S_i + S_j → S_k` is solved by operator splitting: the
//! reaction runs to completion in a virtual reactor at the inlet, then the
//! remaining species travel through the channel's convection-diffusion
//! kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ConcentrationSignal;
use crate::transfer::{apply_channel, DispersionParams};

/// Default fraction of the peak used by the amplifier's indicator.
pub const DEFAULT_THETA: f64 = 0.125;

/// Absolute floor (mol/m³) below which a gate signal never counts as present.
pub const INDICATOR_FLOOR: f64 = 1e-9;

/// Relative gap below which two initial concentrations count as equal.
const EQUAL_RTOL: f64 = 1e-9;

/// Second-order rate constant k, m³/(mol·s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConstant {
    Finite(f64),
    Infinite,
}

impl RateConstant {
    pub fn finite(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Validation(format!("rate constant must be positive, got {k}")));
        }
        Ok(Self::Finite(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionKind {
    /// `S_i + S_j → S_k`.
    Thresholding { reactant_i: String, reactant_j: String, product: String },
    /// `S_i + Amp → S_i + O`.
    Amplifying { catalyst: String, amplifier: String, output: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionSpec {
    pub kind: ReactionKind,
    pub rate: RateConstant,
}

impl ReactionSpec {
    pub fn validate(&self) -> Result<()> {
        let names = match &self.kind {
            ReactionKind::Thresholding { reactant_i, reactant_j, product } => [reactant_i, reactant_j, product],
            ReactionKind::Amplifying { catalyst, amplifier, output } => [catalyst, amplifier, output],
        };
        if names.iter().any(|n| n.is_empty()) || names[0] == names[1] || names[0] == names[2] || names[1] == names[2] {
            return Err(Error::Validation(format!("reaction species must be distinct and named: {names:?}")));
        }
        if let RateConstant::Finite(k) = self.rate {
            RateConstant::finite(k)?;
        }
        Ok(())
    }
}

/// Amount consumed after time `t` in a well-mixed batch starting from
/// `ci0` and `cj0` (each species loses the same amount).
pub fn consumed_closed_form(ci0: f64, cj0: f64, k: RateConstant, t: f64) -> f64 {
    let (a, b) = if ci0 <= cj0 { (ci0, cj0) } else { (cj0, ci0) };
    if a <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let k = match k {
        RateConstant::Infinite => return a,
        RateConstant::Finite(k) => k,
    };
    if b - a < EQUAL_RTOL * b {
        let akt = a * k * t;
        return a * akt / (1.0 + akt);
    }
    // c = ab(1 − E)/(b − aE) with E = exp(−(b − a)kt), written so that
    // neither the numerator nor the denominator cancels.
    let one_minus_e = -(-(b - a) * k * t).exp_m1();
    let c = a * b * one_minus_e / ((b - a) + a * one_minus_e);
    c.min(a)
}

/// Remaining reactants and consumption, one value per grid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionOutput {
    pub remaining_i: ConcentrationSignal,
    pub remaining_j: ConcentrationSignal,
    pub consumed: ConcentrationSignal,
}

/// Discrete virtual-reactor recursion for continuous injection.
///
/// Sample `n` of each input is injected at `nΔt` and reacts, together with
/// whatever was carried over, for one step Δt (the signal's grid step).
/// The reported remainder at sample `n` is what is left after that step.
/// Only the still-paired remainder `min(r_i, r_j)` of both species stays in
/// the reactor for the next step; an unpaired surplus has no partner left
/// and is carried away with the flow.
pub fn algorithm1(ci0: &ConcentrationSignal, cj0: &ConcentrationSignal, k: RateConstant) -> Result<ReactionOutput> {
    ci0.check_same_grid(cj0)?;
    let dt = ci0.dt;
    let n = ci0.len();
    let (mut ri, mut rj, mut cons) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut carry = 0.0;
    for s in 0..n {
        let a = carry + ci0.samples[s];
        let b = carry + cj0.samples[s];
        let c = consumed_closed_form(a, b, k, dt);
        ri[s] = a - c;
        rj[s] = b - c;
        cons[s] = c;
        carry = ri[s].min(rj[s]);
    }
    let grid = |v| ConcentrationSignal { t0: ci0.t0, dt, samples: v };
    Ok(ReactionOutput { remaining_i: grid(ri), remaining_j: grid(rj), consumed: grid(cons) })
}

/// The infinite-rate limit: `C_r = C_0 − min(C_i0, C_j0)` pointwise.
pub fn remaining_infinite_rate(ci0: &ConcentrationSignal, cj0: &ConcentrationSignal) -> Result<ReactionOutput> {
    let consumed = ci0.zip_with(cj0, f64::min)?;
    Ok(ReactionOutput {
        remaining_i: ci0.zip_with(&consumed, |a, c| a - c)?,
        remaining_j: cj0.zip_with(&consumed, |b, c| b - c)?,
        consumed,
    })
}

/// Outlet concentrations (S_i, S_j, S_k) of a thresholding channel of
/// length `x`.
pub fn thresholding_channel(
    ci0: &ConcentrationSignal,
    cj0: &ConcentrationSignal,
    x: f64,
    p: &DispersionParams,
) -> Result<(ConcentrationSignal, ConcentrationSignal, ConcentrationSignal)> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("channel length must be positive, got {x}")));
    }
    let r = remaining_infinite_rate(ci0, cj0)?;
    Ok((
        apply_channel(&r.remaining_i, x, p)?,
        apply_channel(&r.remaining_j, x, p)?,
        apply_channel(&r.consumed, x, p)?,
    ))
}

/// Where the catalyst counts as present: `c > max(θ·max(c), floor)`.
pub fn indicator(signal: &ConcentrationSignal, theta: f64) -> Vec<bool> {
    let cut = (theta * signal.max()).max(INDICATOR_FLOOR);
    signal.samples.iter().map(|&c| c > cut).collect()
}

/// The amplifier stream where the catalyst is present, zero elsewhere.
pub fn gate(amp: &ConcentrationSignal, catalyst: &ConcentrationSignal, theta: f64) -> Result<ConcentrationSignal> {
    amp.check_same_grid(catalyst)?;
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Validation(format!("indicator fraction must lie in [0, 1), got {theta}")));
    }
    let on = indicator(catalyst, theta);
    let mut out = amp.clone();
    for (v, on) in out.samples.iter_mut().zip(on) {
        if !on {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Outlet concentration of O for `S_i + Amp → S_i + O` in a channel of
/// length `x`.
pub fn amplifying_channel(
    csi0: &ConcentrationSignal,
    camp0: &ConcentrationSignal,
    x: f64,
    p: &DispersionParams,
    theta: f64,
) -> Result<ConcentrationSignal> {
    apply_channel(&gate(camp0, csi0, theta)?, x, p)
}
