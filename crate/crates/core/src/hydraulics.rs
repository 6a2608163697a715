//! Pressure-driven flow in rectangular microchannels and the lumped
//! (electrical-analogy) junction model.
//!
//! Coordinates follow the usual duct convention: `y` spans the width
//! (`-w/2 ..= w/2`), `z` spans the height (`0 ..= h`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of odd series terms.
pub const MAX_TERMS: usize = 201;

/// Relative size of the last retained term below which summation stops.
pub const SERIES_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub width: f64,
    pub height: f64,
    pub length: f64,
}

impl ChannelGeometry {
    pub fn new(width: f64, height: f64, length: f64) -> Result<Self> {
        for (name, v) in [("width", width), ("height", height), ("length", length)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("channel {name} must be positive, got {v}")));
            }
        }
        Ok(Self { width, height, length })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(self.width, self.height, length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProperties {
    /// Dynamic viscosity, Pa·s.
    pub viscosity: f64,
    /// Pressure drop per unit length, Pa/m.
    pub pressure_gradient: f64,
}

impl FluidProperties {
    pub fn new(viscosity: f64, pressure_gradient: f64) -> Result<Self> {
        if !(viscosity.is_finite() && viscosity > 0.0) {
            return Err(Error::Validation(format!("viscosity must be positive, got {viscosity}")));
        }
        if !pressure_gradient.is_finite() {
            return Err(Error::Validation("pressure gradient must be finite".into()));
        }
        Ok(Self { viscosity, pressure_gradient })
    }

    /// Water at room temperature.
    pub fn water(pressure_gradient: f64) -> Self {
        Self { viscosity: 1.0e-3, pressure_gradient }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    /// Volumetric flow rate, m³/s.
    pub flow_rate: f64,
    /// Cross-section averaged velocity, m/s.
    pub velocity: f64,
}

impl FlowState {
    pub fn from_velocity(velocity: f64, geom: &ChannelGeometry) -> Result<Self> {
        if !(velocity.is_finite() && velocity >= 0.0) {
            return Err(Error::Validation(format!("velocity must be non-negative, got {velocity}")));
        }
        Ok(Self { flow_rate: velocity * geom.area(), velocity })
    }

    pub fn from_flow_rate(flow_rate: f64, geom: &ChannelGeometry) -> Result<Self> {
        if !(flow_rate.is_finite() && flow_rate >= 0.0) {
            return Err(Error::Validation(format!("flow rate must be non-negative, got {flow_rate}")));
        }
        Ok(Self { flow_rate, velocity: flow_rate / geom.area() })
    }
}

/// One inlet of a junction: its flow and per-species concentrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionInlet {
    pub flow: FlowState,
    pub concentrations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSpec {
    pub inlets: Vec<JunctionInlet>,
    /// Channel leaving the junction; sets the outgoing average velocity.
    pub outlet: ChannelGeometry,
}

/// cosh(a)/cosh(b) for a, b ≥ 0 without overflow.
fn cosh_ratio(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    (a - b).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * b).exp())
}

/// Sums `term(n)` over odd n = 1, 3, 5, ... for at most `n_terms` terms,
/// stopping early once a term is negligible relative to the running sum.
fn odd_series(n_terms: usize, mut term: impl FnMut(f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..n_terms.min(MAX_TERMS) {
        let n = (2 * k + 1) as f64;
        let t = term(n);
        sum += t;
        if k > 0 && t.abs() <= SERIES_RTOL * sum.abs() {
            break;
        }
    }
    sum
}

fn check_terms(n_terms: usize) -> Result<()> {
    if n_terms == 0 {
        return Err(Error::Domain("n_terms must be at least 1".into()));
    }
    Ok(())
}

/// Local axial velocity of fully developed flow at (y, z).
pub fn poiseuille_velocity(
    y: f64,
    z: f64,
    geom: &ChannelGeometry,
    fluid: &FluidProperties,
    n_terms: usize,
) -> Result<f64> {
    check_terms(n_terms)?;
    let (w, h) = (geom.width, geom.height);
    let tol = 1e-12 * w.max(h);
    if !(y.abs() <= w / 2.0 + tol && z >= -tol && z <= h + tol) {
        return Err(Error::Domain(format!(
            "point (y={y:e}, z={z:e}) lies outside the {w:e} x {h:e} cross-section"
        )));
    }
    let y = y.clamp(-w / 2.0, w / 2.0);
    let z = z.clamp(0.0, h);
    let pre = 4.0 * h * h * fluid.pressure_gradient / (PI.powi(3) * fluid.viscosity);
    // A fixed number of terms is summed here: the point value can be tiny
    // near the walls, so the early-exit test is done on the magnitude
    // bound 1/n^3 instead.
    let mut sum = 0.0;
    for k in 0..n_terms.min(MAX_TERMS) {
        let n = (2 * k + 1) as f64;
        let shape = 1.0 - cosh_ratio(n * PI * y / h, n * PI * w / (2.0 * h));
        sum += shape * (n * PI * z / h).sin() / n.powi(3);
        if k > 0 && 1.0 / n.powi(3) <= SERIES_RTOL * sum.abs() {
            break;
        }
    }
    Ok(pre * sum)
}

/// Σ_odd 192a/(π⁵ b n⁵) tanh(nπb/2a) with a the short and b the long side.
fn width_correction(geom: &ChannelGeometry, n_terms: usize) -> f64 {
    let a = geom.width.min(geom.height);
    let b = geom.width.max(geom.height);
    odd_series(n_terms, |n| 192.0 * a / (PI.powi(5) * b * n.powi(5)) * (n * PI * b / (2.0 * a)).tanh())
}

/// Volumetric flow rate, the cross-section integral of [`poiseuille_velocity`]:
/// `8h³wΔp/(π⁴η) Σ_odd [1/n⁴ − 2h/(πwn⁵) tanh(nπw/2h)]` per unit pressure
/// gradient. The 1/n⁴ part is summed exactly (π⁴/96), leaving an n⁻⁵ series.
pub fn volumetric_flow_rate(geom: &ChannelGeometry, fluid: &FluidProperties, n_terms: usize) -> Result<f64> {
    check_terms(n_terms)?;
    let a = geom.width.min(geom.height);
    let b = geom.width.max(geom.height);
    let pre = a.powi(3) * b * fluid.pressure_gradient / (12.0 * fluid.viscosity);
    Ok(pre * (1.0 - width_correction(geom, n_terms)))
}

/// Cross-section averaged velocity Q/(w h).
pub fn average_velocity(geom: &ChannelGeometry, fluid: &FluidProperties, n_terms: usize) -> Result<f64> {
    Ok(volumetric_flow_rate(geom, fluid, n_terms)? / geom.area())
}

/// Hydraulic resistance ΔP/Q of a rectangular channel.
pub fn hydraulic_resistance(geom: &ChannelGeometry, fluid: &FluidProperties, n_terms: usize) -> Result<f64> {
    check_terms(n_terms)?;
    let a = geom.width.min(geom.height);
    let b = geom.width.max(geom.height);
    Ok(12.0 * fluid.viscosity * geom.length / (b * a.powi(3) * (1.0 - width_correction(geom, n_terms))))
}

/// Parallel combination 1/Σ(1/R_i).
pub fn equivalent_resistance(resistances: &[f64]) -> Result<f64> {
    if resistances.is_empty() {
        return Err(Error::Validation("no resistances to combine".into()));
    }
    if let Some(r) = resistances.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Validation(format!("resistance must be positive, got {r}")));
    }
    Ok(1.0 / resistances.iter().map(|r| 1.0 / r).sum::<f64>())
}

/// Mixes the inlets of a junction into one outgoing stream.
pub fn combine_junction(spec: &JunctionSpec) -> Result<(FlowState, Vec<f64>)> {
    let first = spec
        .inlets
        .first()
        .ok_or_else(|| Error::Validation("junction has no inlets".into()))?;
    let species = first.concentrations.len();
    let mut total = 0.0;
    let mut flux = vec![0.0; species];
    for (idx, inlet) in spec.inlets.iter().enumerate() {
        if inlet.concentrations.len() != species {
            return Err(Error::Validation(format!(
                "inlet {idx} carries {} species, expected {species}",
                inlet.concentrations.len()
            )));
        }
        if !(inlet.flow.flow_rate.is_finite() && inlet.flow.flow_rate >= 0.0) {
            return Err(Error::Validation(format!("inlet {idx} has invalid flow rate")));
        }
        if inlet.concentrations.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Validation(format!("inlet {idx} has a negative or non-finite concentration")));
        }
        total += inlet.flow.flow_rate;
        for (f, c) in flux.iter_mut().zip(&inlet.concentrations) {
            *f += inlet.flow.flow_rate * c;
        }
    }
    if total <= 0.0 {
        return Err(Error::DegenerateJunction);
    }
    let mixed = flux.into_iter().map(|f| f / total).collect();
    Ok((FlowState::from_flow_rate(total, &spec.outlet)?, mixed))
}

/// Runs a combining cascade: inlet 0 and 1 meet, the merged stream then
/// meets inlet 2, and so on. Returns the state of every combining channel
/// (one fewer than the number of inlets; a single inlet returns itself).
pub fn combining_cascade(inlets: &[JunctionInlet], channel: &ChannelGeometry) -> Result<Vec<(FlowState, Vec<f64>)>> {
    let (first, rest) = inlets
        .split_first()
        .ok_or_else(|| Error::Validation("cascade has no inlets".into()))?;
    let mut current = first.clone();
    if rest.is_empty() {
        return Ok(vec![(current.flow, current.concentrations)]);
    }
    let mut out = Vec::with_capacity(rest.len());
    for next in rest {
        let spec = JunctionSpec { inlets: vec![current, next.clone()], outlet: *channel };
        let (flow, conc) = combine_junction(&spec)?;
        out.push((flow, conc.clone()));
        current = JunctionInlet { flow, concentrations: conc };
    }
    Ok(out)
}

/// Divides an inlet flow among parallel daughter channels by current
/// division. Concentrations pass through a split unchanged.
pub fn split_junction(
    inlet: &FlowState,
    daughters: &[ChannelGeometry],
    fluid: &FluidProperties,
) -> Result<Vec<FlowState>> {
    if daughters.is_empty() {
        return Err(Error::Validation("split has no daughter channels".into()));
    }
    let rs = daughters
        .iter()
        .map(|g| hydraulic_resistance(g, fluid, MAX_TERMS))
        .collect::<Result<Vec<_>>>()?;
    let req = equivalent_resistance(&rs)?;
    daughters
        .iter()
        .zip(&rs)
        .map(|(g, r)| FlowState::from_flow_rate(req / r * inlet.flow_rate, g))
        .collect()
}

/// Result of checking a velocity multiplier declared at a merge against
/// flow conservation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierCheck {
    pub label: String,
    pub inlets: Vec<f64>,
    pub declared: f64,
    pub conserved: f64,
    /// Dilution fraction of each inlet implied by the inlet multipliers.
    pub fractions: Vec<f64>,
    /// Dilution fractions the operator chain actually applies, if stated.
    pub declared_fractions: Vec<f64>,
    pub consistent: bool,
}

/// Compares a declared outgoing multiplier (and optionally declared
/// dilution weights) with what Kirchhoff's law gives for equal-section
/// inlets carrying `inlets[i]·v_eff`.
pub fn check_merge(label: &str, inlets: &[f64], declared: f64, declared_fractions: &[f64]) -> MultiplierCheck {
    let conserved: f64 = inlets.iter().sum();
    let fractions: Vec<f64> = inlets.iter().map(|q| q / conserved).collect();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    let mut consistent = close(conserved, declared);
    if !declared_fractions.is_empty() {
        consistent &= declared_fractions.len() == fractions.len()
            && declared_fractions.iter().zip(&fractions).all(|(a, b)| close(*a, *b));
    }
    MultiplierCheck {
        label: label.to_string(),
        inlets: inlets.to_vec(),
        declared,
        conserved,
        fractions,
        declared_fractions: declared_fractions.to_vec(),
        consistent,
    }
}
