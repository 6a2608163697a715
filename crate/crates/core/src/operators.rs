//! Elementary microfluidic blocks as operators on concentration signals.
//!
//! | block | meaning |
//! |-------|---------|
//! | transport | `f * H_n(L_T)` |
//! | product | `φ((n−1)C_i/n, C_j/n) * H_n(nL_B+L_C) * H_n(L_R)` |
//! | residual | `[(n−1)C_i/n − φ(…)] * H_n(nL_B+L_C) * H_n(L_R)` |
//! | amplify | `[(C_amp/n * H_n(nL_B+L_C)) · 1{(n−1)C_si/n * H_n(nL_B+L_C) > θ·max}] * H_n(L_R)` |
//! | threshold-amplify | `amplify(residual(C_i, C_j, n), C_amp, n+1)` |
//!
//! `n` is the velocity multiplier: the stage's flow runs at `n·v_eff`, so
//! every kernel inside it is `H_n`. A stage with multiplier `n` uses a
//! buffer of `n·L_B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::ChannelGeometry;
use crate::reactions::{gate, DEFAULT_THETA};
use crate::signal::ConcentrationSignal;
use crate::transfer::{apply_channel_n, DispersionParams};

/// Channel lengths of one block, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockGeometry {
    /// Transport channel L_T.
    pub transport: f64,
    /// Combining segment L_C.
    pub combine: f64,
    /// Base buffer length L_B (scaled by the stage multiplier).
    pub buffer: f64,
    /// Reaction channel L_R.
    pub reaction: f64,
    /// Reject buffers shorter than the mixing length.
    #[serde(default)]
    pub enforce_mixing: bool,
}

impl BlockGeometry {
    pub fn new(transport: f64, combine: f64, buffer: f64, reaction: f64) -> Result<Self> {
        let g = Self { transport, combine, buffer, reaction, enforce_mixing: false };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("L_T", self.transport), ("L_C", self.combine), ("L_B", self.buffer), ("L_R", self.reaction)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// With `enforce_mixing` set, checks L_B against [`buffer_length`] for
    /// the given cross-section. Scaling both sides by `n` leaves the
    /// comparison unchanged, so one check covers every stage.
    pub fn check_mixing(&self, section: &ChannelGeometry, p: &DispersionParams) -> Result<()> {
        if !self.enforce_mixing {
            return Ok(());
        }
        let need = buffer_length(section, p.molecular_diffusion, p.velocity)?;
        if self.buffer < need {
            return Err(Error::Config(format!(
                "buffer {:.3e} m is shorter than the mixing length {need:.3e} m",
                self.buffer
            )));
        }
        Ok(())
    }

    /// Length travelled between a junction and its reaction channel.
    pub fn pre_reaction(&self, n: f64) -> f64 {
        n * self.buffer + self.combine
    }
}

/// Flow-speed multiplier of a stage relative to v_eff.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct VelocityMultiplier(f64);

impl VelocityMultiplier {
    pub fn new(n: f64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Validation(format!("velocity multiplier must be positive, got {n}")));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for VelocityMultiplier {
    type Error = Error;
    fn try_from(n: f64) -> Result<Self> {
        Self::new(n)
    }
}

impl From<VelocityMultiplier> for f64 {
    fn from(n: VelocityMultiplier) -> f64 {
        n.0
    }
}

/// Minimum buffer length (w² + h²)·v/D for transverse mixing.
pub fn buffer_length(section: &ChannelGeometry, d: f64, velocity: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Domain(format!("diffusion coefficient must be positive, got {d}")));
    }
    Ok((section.width.powi(2) + section.height.powi(2)) * velocity / d)
}

fn reacting_multiplier(n: f64) -> Result<f64> {
    VelocityMultiplier::new(n)?;
    if n <= 1.0 {
        return Err(Error::Config(format!(
            "a two-inlet block needs a velocity multiplier above 1, got {n}"
        )));
    }
    Ok(n)
}

/// Operator context: the fluid's dispersion and the amplifier's indicator
/// fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blocks {
    pub dispersion: DispersionParams,
    pub theta: f64,
}

impl Blocks {
    pub fn new(dispersion: DispersionParams) -> Self {
        Self { dispersion, theta: DEFAULT_THETA }
    }

    pub fn with_theta(dispersion: DispersionParams, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::Validation(format!("indicator fraction must lie in [0, 1), got {theta}")));
        }
        Ok(Self { dispersion, theta })
    }

    /// `f * H_n(length)`.
    pub fn channel(&self, f: &ConcentrationSignal, n: f64, length: f64) -> Result<ConcentrationSignal> {
        VelocityMultiplier::new(n)?;
        if !(length.is_finite() && length >= 0.0) {
            return Err(Error::Validation(format!("channel length must be non-negative, got {length}")));
        }
        apply_channel_n(f, length, n, &self.dispersion)
    }

    /// Transport block.
    pub fn transport(&self, f: &ConcentrationSignal, n: f64, g: &BlockGeometry) -> Result<ConcentrationSignal> {
        self.channel(f, n, g.transport)
    }

    /// Buffer-then-reaction-channel transport shared by the reacting blocks.
    fn after_junction(&self, f: &ConcentrationSignal, n: f64, g: &BlockGeometry) -> Result<ConcentrationSignal> {
        let pre = self.channel(f, n, g.pre_reaction(n))?;
        self.channel(&pre, n, g.reaction)
    }

    /// Product block: the thresholding product of the diluted inputs.
    pub fn product(&self, ci: &ConcentrationSignal, cj: &ConcentrationSignal, n: f64, g: &BlockGeometry) -> Result<ConcentrationSignal> {
        let n = reacting_multiplier(n)?;
        self.weighted_product(ci, (n - 1.0) / n, cj, 1.0 / n, n, g)
    }

    /// Residual block: what is left of the diluted `ci` after reacting with
    /// the diluted `cj`.
    pub fn residual(&self, ci: &ConcentrationSignal, cj: &ConcentrationSignal, n: f64, g: &BlockGeometry) -> Result<ConcentrationSignal> {
        let n = reacting_multiplier(n)?;
        self.weighted_residual(ci, (n - 1.0) / n, cj, 1.0 / n, n, g)
    }

    /// Product block with explicit junction dilution weights.
    pub fn weighted_product(
        &self,
        ci: &ConcentrationSignal,
        wi: f64,
        cj: &ConcentrationSignal,
        wj: f64,
        n: f64,
        g: &BlockGeometry,
    ) -> Result<ConcentrationSignal> {
        let mixed = ci.zip_with(cj, |a, b| (wi * a).min(wj * b))?;
        self.after_junction(&mixed, n, g)
    }

    /// Residual block with explicit junction dilution weights.
    pub fn weighted_residual(
        &self,
        ci: &ConcentrationSignal,
        wi: f64,
        cj: &ConcentrationSignal,
        wj: f64,
        n: f64,
        g: &BlockGeometry,
    ) -> Result<ConcentrationSignal> {
        let left = ci.zip_with(cj, |a, b| (wi * a - wj * b).max(0.0))?;
        self.after_junction(&left, n, g)
    }

    /// Amplify block: the diluted amplifier stream wherever the diluted
    /// catalyst is present.
    pub fn amplify(&self, csi: &ConcentrationSignal, camp: &ConcentrationSignal, n: f64, g: &BlockGeometry) -> Result<ConcentrationSignal> {
        let n = reacting_multiplier(n)?;
        let pre = g.pre_reaction(n);
        let amp = self.channel(&camp.scale(1.0 / n), n, pre)?;
        let cat = self.channel(&csi.scale((n - 1.0) / n), n, pre)?;
        self.channel(&gate(&amp, &cat, self.theta)?, n, g.reaction)
    }

    /// Threshold-then-amplify block; the amplifier stage runs at `n + 1`.
    pub fn threshold_amplify(
        &self,
        ci: &ConcentrationSignal,
        cj: &ConcentrationSignal,
        camp: &ConcentrationSignal,
        n: f64,
        g: &BlockGeometry,
    ) -> Result<ConcentrationSignal> {
        self.threshold_amplify_split(ci, cj, camp, n, g, g)
    }

    /// As [`Blocks::threshold_amplify`] with separate geometry for the
    /// residual and amplifier stages (e.g. different buffers).
    pub fn threshold_amplify_split(
        &self,
        ci: &ConcentrationSignal,
        cj: &ConcentrationSignal,
        camp: &ConcentrationSignal,
        n: f64,
        residual_geometry: &BlockGeometry,
        amplify_geometry: &BlockGeometry,
    ) -> Result<ConcentrationSignal> {
        let r = self.residual(ci, cj, n, residual_geometry)?;
        self.amplify(&r, camp, n + 1.0, amplify_geometry)
    }
}

/// Late-time plateau levels of the blocks for constant inputs. Kernels
/// have unit mass, so every transport leaves a plateau unchanged.
pub mod plateau {
    use crate::reactions::INDICATOR_FLOOR;

    pub fn product(ci: f64, cj: f64, n: f64) -> f64 {
        ((n - 1.0) * ci / n).min(cj / n)
    }

    pub fn residual(ci: f64, cj: f64, n: f64) -> f64 {
        ((n - 1.0) * ci / n - cj / n).max(0.0)
    }

    pub fn amplify(csi: f64, camp: f64, n: f64) -> f64 {
        if (n - 1.0) * csi / n > INDICATOR_FLOOR {
            camp / n
        } else {
            0.0
        }
    }

    pub fn threshold_amplify(ci: f64, cj: f64, camp: f64, n: f64) -> f64 {
        amplify(residual(ci, cj, n), camp, n + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::steady_state;
    use crate::signal::{combine, generate, PulseSpec, TimeGrid};
    use approx::assert_relative_eq;

    fn blocks() -> Blocks {
        Blocks::new(DispersionParams::new(1e-8, 1e-8, 1e-3).unwrap())
    }

    fn geometry() -> BlockGeometry {
        BlockGeometry::new(80e-6, 20e-6, 50e-6, 500e-6).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::with_horizon(0.0, 0.005, 12.0).unwrap()
    }

    fn rect(a: f64, s: f64, e: f64) -> ConcentrationSignal {
        generate(&PulseSpec::rect(a, s, e), &grid()).unwrap()
    }

    fn constant(a: f64) -> ConcentrationSignal {
        ConcentrationSignal::constant(&grid(), a)
    }

    fn level(f: &ConcentrationSignal) -> f64 {
        steady_state(f, 0.2).unwrap().level
    }

    #[test]
    fn buffer_length_formula() {
        let s = ChannelGeometry::new(20e-6, 10e-6, 1e-3).unwrap();
        assert_eq!(buffer_length(&s, 1e-9, 0.0).unwrap(), 0.0);
        let a = buffer_length(&s, 1e-9, 1e-3).unwrap();
        assert_relative_eq!(buffer_length(&s, 1e-9, 2e-3).unwrap(), 2.0 * a);
        // (400 + 100)e-12 m² · 1e-3 m/s / 9.83e-9 m²/s ≈ 50.9 µm
        let p = DispersionParams::from_effective(1e-8, 1e-3, &s).unwrap();
        assert_relative_eq!(buffer_length(&s, p.molecular_diffusion, 1e-3).unwrap(), 50.87e-6, max_relative = 1e-3);
        assert!(buffer_length(&s, 0.0, 1e-3).is_err());

        let mut g = geometry();
        assert!(g.check_mixing(&s, &p).is_ok());
        g.enforce_mixing = true;
        assert!(g.check_mixing(&s, &p).is_err());
        g.buffer = 60e-6;
        assert!(g.check_mixing(&s, &p).is_ok());
    }

    #[test]
    fn transport_delays_by_length_over_speed() {
        let b = blocks();
        let f = rect(8.0, 1.0, 3.0);
        let g = BlockGeometry { transport: 0.0, ..geometry() };
        assert_eq!(b.transport(&f, 1.0, &g).unwrap(), f);
        let long = BlockGeometry { transport: 400e-6, ..geometry() };
        for n in [1.0, 2.0] {
            let y = b.transport(&f, n, &long).unwrap();
            assert_relative_eq!(y.centroid().unwrap() - 2.0, 400e-6 / (n * 1e-3), max_relative = 0.02);
        }
        assert!(b.transport(&f, 0.0, &long).is_err());
    }

    #[test]
    fn product_and_residual_plateaus() {
        let b = blocks();
        let g = geometry();
        let zero = constant(0.0);
        assert_eq!(b.product(&constant(8.0), &zero, 2.0, &g).unwrap().max(), 0.0);
        assert_relative_eq!(level(&b.product(&constant(8.0), &constant(6.0), 2.0, &g).unwrap()), 3.0, max_relative = 1e-6);
        assert_eq!(b.residual(&constant(4.0), &constant(12.0), 3.0, &g).unwrap().max(), 0.0);
        let r = b.residual(&constant(9.0), &zero, 3.0, &g).unwrap();
        assert_relative_eq!(level(&r), 6.0, max_relative = 1e-6);
        assert!(matches!(b.product(&zero, &zero, 1.0, &g), Err(Error::Config(_))));
        assert!(matches!(b.residual(&zero, &zero, 0.5, &g), Err(Error::Config(_))));
    }

    #[test]
    fn residual_complements_a_pulse() {
        // Constant P minus a rectangular I leaves P outside the pulse only.
        let b = blocks();
        let out = b.residual(&constant(12.0), &rect(12.0, 4.0, 6.0), 2.0, &geometry()).unwrap();
        assert!(out.at(2.0) > 5.9 && out.at(11.0) > 5.9);
        assert!(out.at(5.6) < 1e-6);
    }

    #[test]
    fn complementarity_before_transport() {
        let b = blocks();
        let g = BlockGeometry { combine: 0.0, buffer: 0.0, reaction: 0.0, ..geometry() };
        let ci = rect(8.0, 1.0, 3.0);
        let cj = rect(5.0, 2.0, 4.0);
        let n = 3.0;
        let sum = combine(&[(1.0, &b.product(&ci, &cj, n, &g).unwrap()), (1.0, &b.residual(&ci, &cj, n, &g).unwrap())]).unwrap();
        for (s, c) in sum.samples.iter().zip(&ci.samples) {
            assert_relative_eq!(*s, c * (n - 1.0) / n, max_relative = 1e-12);
        }
    }

    #[test]
    fn amplify_levels_and_homogeneity() {
        let b = blocks();
        let g = geometry();
        let amp = constant(12.0);
        assert_eq!(b.amplify(&constant(0.0), &amp, 4.0, &g).unwrap().max(), 0.0);
        assert_relative_eq!(level(&b.amplify(&constant(2.0), &amp, 4.0, &g).unwrap()), 3.0, max_relative = 1e-6);
        let pulse = rect(2.0, 1.0, 3.0);
        let a1 = b.amplify(&pulse, &amp, 4.0, &g).unwrap();
        let a2 = b.amplify(&pulse.scale(7.5), &amp, 4.0, &g).unwrap();
        assert_eq!(a1, a2);
        let a3 = b.amplify(&pulse, &amp.scale(2.0), 4.0, &g).unwrap();
        for (x, y) in a1.samples.iter().zip(&a3.samples) {
            assert_relative_eq!(2.0 * x, *y, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn threshold_amplify_cases() {
        let b = blocks();
        let g = geometry();
        let amp = constant(12.0);
        let ci = rect(8.0, 1.0, 4.0);
        assert_eq!(b.threshold_amplify(&ci, &constant(100.0), &amp, 4.0, &g).unwrap().max(), 0.0);
        let out = b.threshold_amplify(&ci, &constant(0.0), &amp, 4.0, &g).unwrap();
        assert_relative_eq!(out.max(), 12.0 / 5.0, max_relative = 1e-3);
        assert_relative_eq!(plateau::threshold_amplify(8.0, 0.0, 12.0, 4.0), 12.0 / 5.0);
    }

    #[test]
    fn product_is_homogeneous() {
        let b = blocks();
        let g = geometry();
        let ci = rect(8.0, 1.0, 3.0);
        let cj = rect(5.0, 2.0, 4.0);
        let base = b.product(&ci, &cj, 2.0, &g).unwrap();
        let scaled = b.product(&ci.scale(3.0), &cj.scale(3.0), 2.0, &g).unwrap();
        for (x, y) in base.samples.iter().zip(&scaled.samples) {
            assert_relative_eq!(3.0 * x, *y, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn consecutive_transports_compose() {
        let b = blocks();
        let f = rect(8.0, 1.0, 3.0);
        let twice = b.channel(&b.channel(&f, 2.0, 150e-6).unwrap(), 2.0, 250e-6).unwrap();
        let once = b.channel(&f, 2.0, 400e-6).unwrap();
        let err = twice.samples.iter().zip(&once.samples).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err <= 0.03 * once.max(), "{err}");
    }

    #[test]
    fn multiplier_must_be_positive() {
        let n = VelocityMultiplier::new(1.5).unwrap();
        assert_eq!(n.get(), 1.5);
        assert!(VelocityMultiplier::new(0.0).is_err());
    }
}
