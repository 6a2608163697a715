//! The chemical AND gate and the steady-state helpers used to size it.
//!
//! Stream flow, for the standard gate (`n = 2`):
//!
//! ```text
//! I1 ─T─┐
//!       ├ product(n) ─┐
//! M ──T─┤             ├ ½·sum ─H_n(L_A2)─ T at 2n ─┐
//!       ├ product(n) ─┘                          ├ residual(2n+1) ─ amplify(2n+2) ─ O
//! I2 ─T─┘                              ThL ─T────┘                      Amp ─T─┘
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::{check_merge, MultiplierCheck};
use crate::operators::{plateau, BlockGeometry, Blocks};
use crate::signal::{combine, ConcentrationSignal};

/// Default trailing fraction for plateau detection.
pub const TAIL_FRACTION: f64 = 0.2;
/// Relative drift over the tail above which no plateau is declared.
pub const SLOPE_LIMIT: f64 = 1e-3;
/// Peak fraction of the expected HIGH level that counts as HIGH.
pub const HIGH_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub level: f64,
    /// Fitted drift across the tail window divided by the level.
    pub relative_slope: f64,
}

/// Mean over the trailing `tail_fraction` of the signal, with a
/// least-squares drift diagnostic.
pub fn steady_state(f: &ConcentrationSignal, tail_fraction: f64) -> Result<SteadyState> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::Validation(format!("tail fraction must lie in (0, 1), got {tail_fraction}")));
    }
    let n = f.len();
    let m = ((n as f64 * tail_fraction).round() as usize).clamp(2.min(n), n);
    let tail = &f.samples[n - m..];
    let level = tail.iter().sum::<f64>() / m as f64;
    let xm = (m as f64 - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in tail.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - level);
        sxx += dx * dx;
    }
    let drift = if sxx > 0.0 { sxy / sxx * (m as f64 - 1.0) } else { 0.0 };
    let scale = level.abs().max(1e-12 * f.max()).max(f64::MIN_POSITIVE);
    let relative_slope = (drift / scale).abs();
    if relative_slope > SLOPE_LIMIT {
        return Err(Error::Convergence { relative_slope, limit: SLOPE_LIMIT });
    }
    Ok(SteadyState { level, relative_slope })
}

/// Stage layout of an AND gate. The first reaction runs at `multiplier`,
/// the merged stream at twice that, and the final threshold/amplify pair
/// at `2·multiplier + 1` and `2·multiplier + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndStages {
    pub multiplier: f64,
    /// Geometry of the two input product blocks.
    pub product: BlockGeometry,
    /// Geometry of the threshold (residual) stage.
    pub residual: BlockGeometry,
    /// Geometry of the amplify stage.
    pub amplify: BlockGeometry,
    /// Centre-lane travel distance between the product blocks and the merge.
    pub l_a2: f64,
}

impl AndStages {
    pub fn uniform(multiplier: f64, geometry: BlockGeometry, l_a2: f64) -> Self {
        Self { multiplier, product: geometry, residual: geometry, amplify: geometry, l_a2 }
    }

    fn merged(&self) -> f64 {
        2.0 * self.multiplier
    }

    fn threshold(&self) -> f64 {
        2.0 * self.multiplier + 1.0
    }

    /// HIGH output level: the amplifier supply diluted at the last junction.
    pub fn expected_high(&self, amp: f64) -> f64 {
        plateau::amplify(1.0, amp, self.threshold() + 1.0)
    }

    /// Flow-conservation checks of the multipliers used by the stages.
    pub fn multiplier_report(&self) -> Vec<MultiplierCheck> {
        let n = self.multiplier;
        vec![
            check_merge("input + M junction", &[n - 1.0, 1.0], n, &[(n - 1.0) / n, 1.0 / n]),
            check_merge("product streams merge", &[n, n], self.merged(), &[0.5, 0.5]),
            check_merge("ThL junction", &[self.merged(), 1.0], self.threshold(), &[self.merged() / self.threshold(), 1.0 / self.threshold()]),
            check_merge("Amp junction", &[self.threshold(), 1.0], self.threshold() + 1.0, &[]),
        ]
    }
}

/// Intermediate and final signals of one AND-gate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AndTrace {
    /// Merged product stream after the centre lane.
    pub merged: ConcentrationSignal,
    /// Merged stream after its transport channel, entering the threshold stage.
    pub threshold_input: ConcentrationSignal,
    pub output: ConcentrationSignal,
}

/// Runs the gate from its first junction on. `a`, `b`, `m`, `thl`, `amp`
/// are the streams as they arrive there (already transported).
pub fn and_core(
    blocks: &Blocks,
    stages: &AndStages,
    a: &ConcentrationSignal,
    b: &ConcentrationSignal,
    m: &ConcentrationSignal,
    thl: &ConcentrationSignal,
    amp: &ConcentrationSignal,
) -> Result<AndTrace> {
    let n = stages.multiplier;
    let (ga, gb) = rayon::join(
        || blocks.product(a, m, n, &stages.product),
        || blocks.product(b, m, n, &stages.product),
    );
    let half = combine(&[(0.5, &ga?), (0.5, &gb?)])?;
    let merged = blocks.channel(&half, n, stages.l_a2)?;
    let threshold_input = blocks.transport(&merged, stages.merged(), &stages.residual)?;
    let output = blocks.threshold_amplify_split(
        &threshold_input,
        thl,
        amp,
        stages.threshold(),
        &stages.residual,
        &stages.amplify,
    )?;
    Ok(AndTrace { merged, threshold_input, output })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AndGateParams {
    pub i1: ConcentrationSignal,
    pub i2: ConcentrationSignal,
    /// Injected M, ThL and Amp levels (constant supplies), mol/m³.
    pub m0: f64,
    pub thl0: f64,
    pub amp0: f64,
    pub geometry: BlockGeometry,
    pub l_a2: f64,
    pub blocks: Blocks,
}

impl AndGateParams {
    pub fn validate(&self) -> Result<()> {
        self.i1.check_same_grid(&self.i2)?;
        for (name, v) in [("M", self.m0), ("ThL", self.thl0), ("Amp", self.amp0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} level must be non-negative, got {v}")));
            }
        }
        if self.i1.min() < 0.0 || self.i2.min() < 0.0 {
            return Err(Error::Validation("input concentrations must be non-negative".into()));
        }
        if !(self.l_a2 > 0.0) {
            return Err(Error::Validation(format!("L_A2 must be positive, got {}", self.l_a2)));
        }
        self.geometry.validate()
    }

    pub fn stages(&self) -> AndStages {
        AndStages::uniform(2.0, self.geometry, self.l_a2)
    }

    pub fn expected_high(&self) -> f64 {
        self.stages().expected_high(self.amp0)
    }

    fn supply(&self, level: f64) -> ConcentrationSignal {
        ConcentrationSignal::constant(&self.i1.grid(), level)
    }
}

/// Evaluates the AND gate for the given inputs.
pub fn and_gate(params: &AndGateParams) -> Result<AndTrace> {
    params.validate()?;
    let b = &params.blocks;
    let g = &params.geometry;
    let t = |f: &ConcentrationSignal| b.transport(f, 1.0, g);
    and_core(
        b,
        &params.stages(),
        &t(&params.i1)?,
        &t(&params.i2)?,
        &t(&params.supply(params.m0))?,
        &t(&params.supply(params.thl0))?,
        &t(&params.supply(params.amp0))?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThlWindow {
    /// Injected ThL level below which one HIGH input already triggers the gate.
    pub lower: f64,
    /// Injected ThL level above which two HIGH inputs no longer do.
    pub upper: f64,
    /// Merged-stream level at the threshold junction with one input HIGH.
    pub c1: f64,
}

impl ThlWindow {
    pub fn contains(&self, thl0: f64) -> bool {
        thl0 > self.lower && thl0 < self.upper
    }
}

/// Range of injected ThL levels for which the gate computes AND.
pub fn thl_window(params: &AndGateParams) -> Result<ThlWindow> {
    params.validate()?;
    let c0 = params.i1.max().max(params.i2.max());
    if c0 == 0.0 {
        return Ok(ThlWindow { lower: 0.0, upper: 0.0, c1: 0.0 });
    }
    let b = &params.blocks;
    let g = &params.geometry;
    let s = params.stages();
    let t = |f: &ConcentrationSignal| b.transport(f, 1.0, g);
    let n = s.multiplier;
    let k = s.threshold();

    // One input HIGH: half of one product stream, diluted by the ThL inlet.
    let one = b.product(&t(&params.supply(c0))?, &t(&params.supply(params.m0))?, n, &s.product)?;
    let one = b.channel(&one.scale(0.5 * s.merged() / k), n, s.l_a2)?;
    let one = b.channel(&b.transport(&one, s.merged(), &s.residual)?, k, s.residual.pre_reaction(k))?;
    let c1 = steady_state(&one, TAIL_FRACTION)?.level;

    // ThL per unit injected level at the same junction.
    let unit = b.channel(&t(&params.supply(1.0 / k))?, k, s.residual.pre_reaction(k))?;
    let gain = steady_state(&unit, TAIL_FRACTION)?.level;
    Ok(ThlWindow { lower: c1 / gain, upper: 2.0 * c1 / gain, c1 })
}

/// Steady ThL level where it meets the merged stream.
pub fn thl_at_junction(params: &AndGateParams) -> Result<f64> {
    let b = &params.blocks;
    let s = params.stages();
    let k = s.threshold();
    let thl = b.transport(&params.supply(params.thl0 / k), 1.0, &params.geometry)?;
    Ok(steady_state(&b.channel(&thl, k, s.residual.pre_reaction(k))?, TAIL_FRACTION)?.level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub inputs: (bool, bool),
    pub peak: f64,
    pub high: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub rows: Vec<TruthRow>,
    pub expected_high: f64,
}

impl TruthTable {
    /// HIGH exactly when both inputs are HIGH.
    pub fn is_and(&self) -> bool {
        self.rows.iter().all(|r| r.high == (r.inputs.0 && r.inputs.1))
    }

    /// Every row stays below `frac` of the expected HIGH level.
    pub fn all_below(&self, frac: f64) -> bool {
        self.rows.iter().all(|r| r.peak < frac * self.expected_high)
    }
}

/// Runs the gate for all four input combinations; a LOW input is zero.
pub fn and_truth_table(params: &AndGateParams) -> Result<TruthTable> {
    params.validate()?;
    let zero = ConcentrationSignal::zeros(&params.i1.grid());
    let expected_high = params.expected_high();
    let combos = [(false, false), (false, true), (true, false), (true, true)];
    let rows = combos
        .iter()
        .map(|&(x1, x2)| {
            let p = AndGateParams {
                i1: if x1 { params.i1.clone() } else { zero.clone() },
                i2: if x2 { params.i2.clone() } else { zero.clone() },
                ..params.clone()
            };
            let peak = and_gate(&p)?.output.max();
            Ok(TruthRow { inputs: (x1, x2), peak, high: peak > HIGH_FRACTION * expected_high })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthTable { rows, expected_high })
}
