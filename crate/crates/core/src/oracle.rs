//! One-dimensional finite-difference solver for convection–diffusion and
//! convection–diffusion–reaction in a straight channel.
//!
//! Explicit upwind convection with central diffusion on a uniform grid.
//! The inlet holds the input concentration (nearest sample), the far end is
//! zero-gradient, and the domain extends past the observation point so the
//! outflow boundary does not disturb it. Nothing here calls the transfer
//! module; the solver is the reference the analytical path is checked
//! against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reactions::RateConstant;
use crate::signal::ConcentrationSignal;
use crate::transfer::DispersionParams;

/// Largest admissible Courant number v·Δt/Δx.
pub const MAX_CFL: f64 = 0.9;
/// Largest admissible diffusion number D·Δt/Δx². Upwind plus central
/// diffusion also needs CFL + 2·D·Δt/Δx² ≤ 1.
pub const MAX_DIFFUSION_NUMBER: f64 = 0.45;
/// Largest admissible k·max(C)·Δt for the reaction substep.
pub const MAX_REACTION_NUMBER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Transport then reaction each step (first order in Δt).
    ExplicitUpwind,
    /// Half reaction, transport, half reaction.
    StrangSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub dx: f64,
    pub dt: f64,
    pub scheme: Scheme,
    /// Total domain length; the observation point lies inside it.
    pub domain: f64,
}

impl FdConfig {
    /// Δx = L/`cells`, domain 3L, and the largest Δt that divides
    /// `output_dt` while meeting the CFL, diffusion and (for `k_cmax` =
    /// k·max C > 0) reaction limits.
    pub fn for_channel(length: f64, p: &DispersionParams, output_dt: f64, cells: usize, k_cmax: f64) -> Result<Self> {
        if !(length > 0.0 && output_dt > 0.0 && cells > 0) {
            return Err(Error::Config(format!("bad FD setup: L={length}, dt={output_dt}, cells={cells}")));
        }
        let dx = length / cells as f64;
        let mut limit = (MAX_CFL * dx / p.velocity)
            .min(MAX_DIFFUSION_NUMBER * dx * dx / p.effective_diffusion)
            .min(0.9 / (p.velocity / dx + 2.0 * p.effective_diffusion / (dx * dx)));
        if k_cmax > 0.0 {
            limit = limit.min(MAX_REACTION_NUMBER / k_cmax);
        }
        let substeps = (output_dt / limit).ceil().max(1.0);
        Ok(Self { dx, dt: output_dt / substeps, scheme: Scheme::StrangSplit, domain: 3.0 * length })
    }

    /// Halves Δx and Δt; the diffusion number doubles.
    pub fn refined(&self) -> Self {
        Self { dx: self.dx / 2.0, dt: self.dt / 2.0, ..*self }
    }

    pub fn validate(&self, p: &DispersionParams, length: f64) -> Result<()> {
        if !(self.dx > 0.0 && self.dt > 0.0 && self.domain.is_finite()) {
            return Err(Error::Config(format!("FD steps must be positive: dx={}, dt={}", self.dx, self.dt)));
        }
        if !(length > 0.0 && length <= self.domain) {
            return Err(Error::Config(format!("observation point {length} outside the domain {}", self.domain)));
        }
        let cfl = p.velocity * self.dt / self.dx;
        let dn = p.effective_diffusion * self.dt / (self.dx * self.dx);
        if cfl > MAX_CFL + 1e-12 {
            return Err(Error::Stability(format!("CFL number {cfl:.3} exceeds {MAX_CFL}")));
        }
        if dn > MAX_DIFFUSION_NUMBER + 1e-12 {
            return Err(Error::Stability(format!("diffusion number {dn:.3} exceeds {MAX_DIFFUSION_NUMBER}")));
        }
        // Upwind plus central diffusion stays monotone only if the update
        // weights are non-negative.
        if cfl + 2.0 * dn > 1.0 + 1e-12 {
            return Err(Error::Stability(format!("CFL + 2·diffusion number = {:.3} exceeds 1", cfl + 2.0 * dn)));
        }
        Ok(())
    }

    fn substeps(&self, output_dt: f64) -> Result<usize> {
        let m = output_dt / self.dt;
        let r = m.round();
        if r < 1.0 || (m - r).abs() > 1e-9 * m {
            return Err(Error::Config(format!("FD step {} does not divide the output step {output_dt}", self.dt)));
        }
        Ok(r as usize)
    }
}

const FLUSH: f64 = 1e-250;

/// Explicit transport of one species over one step; `inlet` is imposed at
/// node 0 and node N mirrors its neighbour.
fn transport_step(c: &mut [f64], scratch: &mut [f64], inlet: f64, cfl: f64, dn: f64) {
    let n = c.len() - 1;
    scratch[0] = inlet;
    for i in 1..n {
        scratch[i] = c[i] - cfl * (c[i] - c[i - 1]) + dn * (c[i + 1] - 2.0 * c[i] + c[i - 1]);
    }
    scratch[n] = c[n] - cfl * (c[n] - c[n - 1]) + dn * (c[n - 1] - c[n]);
    // Subnormal tails ahead of a front slow the loop by orders of magnitude.
    for (dst, v) in c.iter_mut().zip(scratch.iter()) {
        *dst = if v.abs() < FLUSH { 0.0 } else { *v };
    }
}

#[derive(Debug, Clone, Copy)]
enum Kinetics {
    /// S_i + S_j → S_k.
    Consuming(f64),
    /// S_i + Amp → S_i + O.
    Catalytic(f64),
}

/// RK4 for ci' = cj' = −k ci cj over `h`, returning the amount reacted.
fn react(ci: f64, cj: f64, k: f64, h: f64) -> f64 {
    let f = |a: f64, b: f64| -k * a * b;
    let k1 = f(ci, cj);
    let k2 = f(ci + 0.5 * h * k1, cj + 0.5 * h * k1);
    let k3 = f(ci + 0.5 * h * k2, cj + 0.5 * h * k2);
    let k4 = f(ci + h * k3, cj + h * k3);
    let d = -(h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    d.clamp(0.0, ci.min(cj).max(0.0))
}

/// Snapshot of the full field, written when requested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpaceTimeField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `c[t][x]`.
    pub c: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    /// Long-format CSV with columns `x,t,C`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,t,C\n");
        for (t, row) in self.t.iter().zip(&self.c) {
            for (x, c) in self.x.iter().zip(row) {
                out.push_str(&format!("{x:e},{t},{c:e}\n"));
            }
        }
        out
    }
}

struct Solver<'a> {
    cfg: FdConfig,
    p: &'a DispersionParams,
    obs: usize,
    nodes: usize,
    per_output: usize,
}

impl<'a> Solver<'a> {
    fn new(length: f64, p: &'a DispersionParams, cfg: FdConfig, output_dt: f64) -> Result<Self> {
        p.validate()?;
        cfg.validate(p, length)?;
        let nodes = (cfg.domain / cfg.dx).round() as usize + 1;
        let obs = (length / cfg.dx).round() as usize;
        Ok(Self { cfg, p, obs, nodes, per_output: cfg.substeps(output_dt)? })
    }

    /// Runs species sharing one flow. `inlets[s]` is the inlet series of
    /// species s; `reaction` couples species 0 and 1 into species 2.
    fn run(
        &self,
        inlets: &[&ConcentrationSignal],
        reaction: Option<Kinetics>,
        mut field: Option<(&mut SpaceTimeField, usize)>,
    ) -> Vec<Vec<f64>> {
        let len = inlets[0].len();
        let species = inlets.len();
        let cfl = self.p.velocity * self.cfg.dt / self.cfg.dx;
        let dn = self.p.effective_diffusion * self.cfg.dt / (self.cfg.dx * self.cfg.dx);
        let mut c = vec![vec![0.0; self.nodes]; species];
        let mut scratch = vec![0.0; self.nodes];
        let mut out = vec![vec![0.0; len]; species];
        let out_dt = inlets[0].dt;
        let react_all = |c: &mut [Vec<f64>], h: f64| {
            let Some(kin) = reaction else { return };
            let (ab, rest) = c.split_at_mut(2);
            let (a, b) = ab.split_at_mut(1);
            for i in 0..self.nodes {
                match kin {
                    Kinetics::Consuming(k) => {
                        let d = react(a[0][i], b[0][i], k, h);
                        a[0][i] -= d;
                        b[0][i] -= d;
                        rest[0][i] += d;
                    }
                    Kinetics::Catalytic(k) => {
                        // Amp decays at rate k·C_i with C_i fixed.
                        let d = b[0][i] * -(-k * a[0][i].max(0.0) * h).exp_m1();
                        b[0][i] -= d;
                        rest[0][i] += d;
                    }
                }
            }
        };
        // Inputs are constant beyond their last non-zero sample; once that is
        // passed and the domain has drained the outlet stays at zero.
        let last_active = inlets.iter().map(|s| s.samples.iter().rposition(|v| *v != 0.0).map_or(0, |i| i + 1)).max().unwrap_or(0);
        let peak = inlets.iter().map(|s| s.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
        for k in 0..len {
            for s in 0..species {
                out[s][k] = c[s][self.obs];
            }
            if let Some((f, every)) = field.as_mut() {
                if k % *every == 0 {
                    f.t.push(inlets[0].time(k));
                    f.c.push(c[0].clone());
                }
            }
            if k + 1 == len {
                break;
            }
            if field.is_none() && k >= last_active && c.iter().all(|v| v.iter().all(|x| x.abs() <= 1e-14 * peak)) {
                break;
            }
            // Hold the sample nearest the current time over each sub-step.
            for m in 0..self.per_output {
                let t_rel = (m as f64 + 0.5) * self.cfg.dt / out_dt;
                let idx = if t_rel < 0.5 { k } else { (k + 1).min(len - 1) };
                match self.cfg.scheme {
                    Scheme::StrangSplit => {
                        react_all(&mut c, 0.5 * self.cfg.dt);
                        for s in 0..species {
                            transport_step(&mut c[s], &mut scratch, inlets[s].samples[idx], cfl, dn);
                        }
                        react_all(&mut c, 0.5 * self.cfg.dt);
                    }
                    Scheme::ExplicitUpwind => {
                        for s in 0..species {
                            transport_step(&mut c[s], &mut scratch, inlets[s].samples[idx], cfl, dn);
                        }
                        react_all(&mut c, self.cfg.dt);
                    }
                }
            }
        }
        if let Some((f, _)) = field {
            f.x = (0..self.nodes).map(|i| i as f64 * self.cfg.dx).collect();
        }
        out
    }
}

fn to_signal(like: &ConcentrationSignal, samples: Vec<f64>) -> ConcentrationSignal {
    ConcentrationSignal { t0: like.t0, dt: like.dt, samples }
}

/// Outlet series at distance `length` for the inlet series `input`.
pub fn fd_convection_diffusion(input: &ConcentrationSignal, length: f64, p: &DispersionParams, cfg: &FdConfig) -> Result<ConcentrationSignal> {
    let solver = Solver::new(length, p, *cfg, input.dt)?;
    let mut out = solver.run(&[input], None, None);
    Ok(to_signal(input, out.pop().expect("one species")))
}

/// As [`fd_convection_diffusion`], also recording the field every
/// `every` output samples.
pub fn fd_convection_diffusion_field(
    input: &ConcentrationSignal,
    length: f64,
    p: &DispersionParams,
    cfg: &FdConfig,
    every: usize,
) -> Result<(ConcentrationSignal, SpaceTimeField)> {
    let solver = Solver::new(length, p, *cfg, input.dt)?;
    let mut field = SpaceTimeField::default();
    let mut out = solver.run(&[input], None, Some((&mut field, every.max(1))));
    Ok((to_signal(input, out.pop().expect("one species")), field))
}

/// Outlet series (S_i, S_j, S_k) of a channel where S_i + S_j → S_k at
/// rate k while both are carried by the flow.
pub fn fd_reaction(
    ci0: &ConcentrationSignal,
    cj0: &ConcentrationSignal,
    length: f64,
    p: &DispersionParams,
    k: RateConstant,
    cfg: &FdConfig,
) -> Result<(ConcentrationSignal, ConcentrationSignal, ConcentrationSignal)> {
    ci0.check_same_grid(cj0)?;
    let k = match k {
        RateConstant::Finite(k) => k,
        RateConstant::Infinite => return Err(Error::Config("the FD solver needs a finite rate constant".into())),
    };
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("rate constant must be finite and non-negative, got {k}")));
    }
    let cmax = ci0.max().max(cj0.max());
    if k * cmax * cfg.dt > MAX_REACTION_NUMBER * (1.0 + 1e-12) {
        return Err(Error::Stability(format!(
            "reaction number k·maxC·Δt = {:.3} exceeds {MAX_REACTION_NUMBER}",
            k * cmax * cfg.dt
        )));
    }
    let solver = Solver::new(length, p, *cfg, ci0.dt)?;
    let zeros = ConcentrationSignal::zeros(&ci0.grid());
    let out = solver.run(&[ci0, cj0, &zeros], (k > 0.0).then_some(Kinetics::Consuming(k)), None);
    let [a, b, c]: [Vec<f64>; 3] = out.try_into().expect("three species");
    Ok((to_signal(ci0, a), to_signal(ci0, b), to_signal(ci0, c)))
}

/// Outlet series of O for S_i + Amp → S_i + O, S_i acting as catalyst.
/// The Amp decay over each step is integrated exactly, so only the
/// transport limits apply.
pub fn fd_amplifying(
    csi0: &ConcentrationSignal,
    camp0: &ConcentrationSignal,
    length: f64,
    p: &DispersionParams,
    k: f64,
    cfg: &FdConfig,
) -> Result<ConcentrationSignal> {
    csi0.check_same_grid(camp0)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("rate constant must be finite and non-negative, got {k}")));
    }
    let solver = Solver::new(length, p, *cfg, csi0.dt)?;
    let zeros = ConcentrationSignal::zeros(&csi0.grid());
    let mut out = solver.run(&[csi0, camp0, &zeros], (k > 0.0).then_some(Kinetics::Catalytic(k)), None);
    Ok(to_signal(csi0, out.pop().expect("three species")))
}

/// Discrepancy between a candidate signal and a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// max |a − b| / max |b|.
    pub peak_normalized_max: f64,
    /// ‖a − b‖₂ / ‖b‖₂.
    pub relative_l2: f64,
    /// Lag (s) of `a` behind `b` maximizing their cross-correlation.
    pub delay: f64,
}

/// Compares `a` against the reference `b`. If the grids differ `a` is
/// linearly interpolated onto the grid of `b` (zero outside its span).
pub fn compare(a: &ConcentrationSignal, b: &ConcentrationSignal) -> ErrorReport {
    let a: Vec<f64> = if a.check_same_grid(b).is_ok() {
        a.samples.clone()
    } else {
        b.times().map(|t| interpolate(a, t)).collect()
    };
    let dt = b.dt;
    let b = &b.samples;
    let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff_max = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let diff_l2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else if num > 0.0 { f64::INFINITY } else { 0.0 };
    let n = b.len() as i64;
    let xcorr = |lag: i64| -> f64 {
        (0..n)
            .filter_map(|i| {
                let j = i - lag;
                (0..n).contains(&j).then(|| a[i as usize] * b[j as usize])
            })
            .sum()
    };
    // Ties go to the smaller lag magnitude.
    let mut best = (0i64, xcorr(0));
    for m in 1..n {
        for lag in [m, -m] {
            let s = xcorr(lag);
            if s > best.1 {
                best = (lag, s);
            }
        }
    }
    ErrorReport {
        peak_normalized_max: ratio(diff_max, peak),
        relative_l2: ratio(diff_l2, norm_b),
        delay: best.0 as f64 * dt,
    }
}

fn interpolate(s: &ConcentrationSignal, t: f64) -> f64 {
    let u = (t - s.t0) / s.dt;
    if u < 0.0 || u > (s.len() - 1) as f64 {
        return 0.0;
    }
    let i = (u.floor() as usize).min(s.len() - 1);
    let f = u - i as f64;
    if i + 1 < s.len() {
        s.samples[i] * (1.0 - f) + s.samples[i + 1] * f
    } else {
        s.samples[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate, PulseSpec, TimeGrid};
    use crate::UM;

    fn p() -> DispersionParams {
        DispersionParams::new(1e-8, 1e-8, 1e-3).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::with_horizon(0.0, 0.005, 6.0).unwrap()
    }

    fn rect() -> ConcentrationSignal {
        generate(&PulseSpec::rect(8.0, 1.0, 3.0), &grid()).unwrap()
    }

    fn cfg(cells: usize) -> FdConfig {
        FdConfig::for_channel(500.0 * UM, &p(), 0.005, cells, 0.0).unwrap()
    }

    /// Room for two halvings of Δx and Δt.
    fn refinable(cells: usize) -> FdConfig {
        let c = cfg(cells);
        FdConfig { dt: c.dt / 4.0, ..c }
    }

    #[test]
    fn zero_in_zero_out() {
        let out = fd_convection_diffusion(&ConcentrationSignal::zeros(&grid()), 500.0 * UM, &p(), &cfg(100)).unwrap();
        assert!(out.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_unstable_steps() {
        let mut c = cfg(100);
        c.dt *= 10.0;
        assert!(matches!(fd_convection_diffusion(&rect(), 500.0 * UM, &p(), &c), Err(Error::Stability(_))));
        let mut c = cfg(100);
        c.dt *= 0.7;
        assert!(matches!(fd_convection_diffusion(&rect(), 500.0 * UM, &p(), &c), Err(Error::Config(_))));
    }

    #[test]
    fn delay_and_mass() {
        let input = rect();
        let out = fd_convection_diffusion(&input, 500.0 * UM, &p(), &cfg(500)).unwrap();
        let delay = out.centroid().unwrap() - input.centroid().unwrap();
        assert!((delay / 0.5 - 1.0).abs() < 0.03, "delay {delay}");
        assert!((out.integral() / input.integral() - 1.0).abs() < 0.01);
    }

    #[test]
    fn grid_converged() {
        let a = fd_convection_diffusion(&rect(), 500.0 * UM, &p(), &cfg(500)).unwrap();
        let b = fd_convection_diffusion(&rect(), 500.0 * UM, &p(), &refinable(500).refined()).unwrap();
        let e = compare(&a, &b).peak_normalized_max;
        assert!(e < 0.01, "{e}");
    }

    #[test]
    fn upwind_is_first_order() {
        let input = generate(&PulseSpec::Gaussian { amplitude: 1.0, centre: 1.5, width: 0.3 }, &grid()).unwrap();
        let run = |c: FdConfig| fd_convection_diffusion(&input, 500.0 * UM, &p(), &c).unwrap();
        let c1 = refinable(50);
        let (u1, u2, u4) = (run(c1), run(c1.refined()), run(c1.refined().refined()));
        let diff = |a: &ConcentrationSignal, b: &ConcentrationSignal| {
            a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let order = (diff(&u1, &u2) / diff(&u2, &u4)).log2();
        assert!((0.8..=1.2).contains(&order), "order {order}");
    }

    #[test]
    fn field_dump() {
        let (out, field) = fd_convection_diffusion_field(&rect(), 500.0 * UM, &p(), &cfg(50), 200).unwrap();
        assert_eq!(field.t.len(), out.len().div_ceil(200));
        assert_eq!(field.x.len(), field.c[0].len());
        let csv = field.to_csv();
        assert!(csv.starts_with("x,t,C\n"));
        assert_eq!(csv.lines().count(), 1 + field.t.len() * field.x.len());
    }

    fn pair() -> (ConcentrationSignal, ConcentrationSignal) {
        let g = grid();
        (
            generate(&PulseSpec::rect(3.0, 1.0, 2.5), &g).unwrap(),
            generate(&PulseSpec::rect(2.0, 1.5, 3.5), &g).unwrap(),
        )
    }

    #[test]
    fn zero_rate_decouples() {
        let (a, b) = pair();
        let c = cfg(100);
        let (ci, cj, ck) = fd_reaction(&a, &b, 500.0 * UM, &p(), RateConstant::Finite(0.0), &c).unwrap();
        assert_eq!(ci, fd_convection_diffusion(&a, 500.0 * UM, &p(), &c).unwrap());
        assert_eq!(cj, fd_convection_diffusion(&b, 500.0 * UM, &p(), &c).unwrap());
        assert!(ck.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sum_species_obeys_transport() {
        let (a, b) = pair();
        let k = 400.0;
        let c = FdConfig::for_channel(500.0 * UM, &p(), 0.005, 200, k * 3.0).unwrap();
        let (ci, _, ck) = fd_reaction(&a, &b, 500.0 * UM, &p(), RateConstant::Finite(k), &c).unwrap();
        let plain = fd_convection_diffusion(&a, 500.0 * UM, &p(), &c).unwrap();
        let sum = ci.zip_with(&ck, |x, y| x + y).unwrap();
        let e = compare(&sum, &plain).peak_normalized_max;
        assert!(e < 0.005, "{e}");
        assert!(ck.max() > 1.0);
    }

    #[test]
    fn stiff_reaction_rejected() {
        let (a, b) = pair();
        let c = cfg(100);
        let r = fd_reaction(&a, &b, 500.0 * UM, &p(), RateConstant::Finite(1e6), &c);
        assert!(matches!(r, Err(Error::Stability(_))));
        assert!(fd_reaction(&a, &b, 500.0 * UM, &p(), RateConstant::Infinite, &c).is_err());
    }

    #[test]
    fn compare_metrics() {
        let a = rect();
        let r = compare(&a, &a);
        assert_eq!((r.peak_normalized_max, r.relative_l2, r.delay), (0.0, 0.0, 0.0));
        let shifted = a.delay(a.dt).unwrap();
        assert!((compare(&shifted, &a).delay - a.dt).abs() < 1e-15);
        assert!((compare(&a, &shifted).delay + a.dt).abs() < 1e-15);
        let coarse = ConcentrationSignal::new(0.0, 0.01, a.samples.iter().step_by(2).copied().collect()).unwrap();
        assert!(compare(&coarse, &a).peak_normalized_max <= 0.5 + 1e-12);
    }
}
