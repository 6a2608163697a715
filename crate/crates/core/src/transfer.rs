//! Impulse response of a straight convection-diffusion channel.
//!
//! The channel's Laplace-domain solution
//! `C̃(x, s) = exp[(v − √(v² + 4sD)) x / 2D]` is inverted numerically along
//! the imaginary axis with the one-sided Fourier (Gil-Pelaez) integral
//! `H(t) = (1/π) ∫₀^∞ Re[e^{jωt} C̃(x, jω)] dω`.
//!
//! Kernel samples are bin averages of `H` over `[t − dt/2, t + dt/2]`,
//! which keeps unit mass on the grid even when the channel is so short
//! that `H` is narrower than one sample.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::ChannelGeometry;
use crate::quadrature::gauss_legendre;
use crate::signal::ConcentrationSignal;

/// |C̃| below which the frequency integrand is truncated.
pub const OMEGA_CUTOFF: f64 = 1e-8;
/// Relative change (to the peak) at which panel refinement stops.
pub const REFINE_RTOL: f64 = 1e-6;
/// Largest pre-clip negative lobe tolerated, relative to the peak.
pub const NEGATIVE_LOBE_LIMIT: f64 = 1e-2;
/// Tolerated deviation of the raw kernel mass from one.
pub const RAW_MASS_TOL: f64 = 1e-2;

const GL_ORDER: usize = 16;
const MAX_NODE_BINS: f64 = 4e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    /// Molecular diffusion coefficient D, m²/s.
    pub molecular_diffusion: f64,
    /// Effective (Taylor-Aris) axial dispersion D_eff, m²/s.
    pub effective_diffusion: f64,
    /// Average flow velocity v_eff, m/s.
    pub velocity: f64,
}

impl DispersionParams {
    pub fn new(molecular_diffusion: f64, effective_diffusion: f64, velocity: f64) -> Result<Self> {
        let p = Self { molecular_diffusion, effective_diffusion, velocity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { molecular_diffusion: d, effective_diffusion: de, velocity: v } = *self;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Validation(format!("molecular diffusion must be positive, got {d}")));
        }
        if !(de.is_finite() && de >= d * (1.0 - 1e-12)) {
            return Err(Error::Validation(format!("effective diffusion {de} must be at least D = {d}")));
        }
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Validation(format!("velocity must be positive, got {v}")));
        }
        Ok(())
    }

    /// D_eff from the Taylor-Aris relation for the given D.
    pub fn from_molecular(d: f64, velocity: f64, geom: &ChannelGeometry) -> Result<Self> {
        Self::new(d, taylor_aris(d, velocity, geom)?, velocity)
    }

    /// Fixes D_eff and recovers the molecular D consistent with it.
    pub fn from_effective(d_eff: f64, velocity: f64, geom: &ChannelGeometry) -> Result<Self> {
        Self::new(molecular_diffusion_for(d_eff, velocity, geom)?, d_eff, velocity)
    }

    /// The same fluid moving at `n·v_eff` (D_eff held fixed).
    pub fn at_multiplier(&self, n: f64) -> Self {
        Self { velocity: n * self.velocity, ..*self }
    }

    /// Mean transit time x/v.
    pub fn mean_delay(&self, x: f64) -> f64 {
        x / self.velocity
    }

    /// Transit-time variance 2 D_eff x / v³.
    pub fn delay_variance(&self, x: f64) -> f64 {
        2.0 * self.effective_diffusion * x / self.velocity.powi(3)
    }
}

fn shear_coefficient(geom: &ChannelGeometry) -> f64 {
    let (w, h) = (geom.width, geom.height);
    8.5 * h * h * w * w / (210.0 * (h * h + 2.4 * h * w + w * w))
}

/// Taylor-Aris effective dispersion D·(1 + 8.5 v²h²w² / (210 D² (h² + 2.4hw + w²))).
pub fn taylor_aris(d: f64, velocity: f64, geom: &ChannelGeometry) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Domain(format!("diffusion coefficient must be positive, got {d}")));
    }
    Ok(d + shear_coefficient(geom) * velocity * velocity / d)
}

/// Inverts [`taylor_aris`] for D. Of the two roots the larger one is
/// returned; it tends to D_eff as the velocity goes to zero.
pub fn molecular_diffusion_for(d_eff: f64, velocity: f64, geom: &ChannelGeometry) -> Result<f64> {
    let cv2 = shear_coefficient(geom) * velocity * velocity;
    let disc = d_eff * d_eff - 4.0 * cv2;
    if !(d_eff > 0.0) || disc < 0.0 {
        return Err(Error::Domain(format!(
            "no molecular diffusion coefficient yields D_eff = {d_eff:e} at v = {velocity:e} (minimum reachable is {:e})",
            2.0 * cv2.sqrt()
        )));
    }
    Ok(0.5 * (d_eff + disc.sqrt()))
}

/// `C̃(x, jω)`, computed in the cancellation-free form
/// `exp[−2jωx / (v + √(v² + 4jωD))]` with the principal root.
pub fn frequency_response(x: f64, omega: f64, p: &DispersionParams) -> Complex64 {
    if x == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let v = p.velocity;
    let z = Complex64::new(0.0, 4.0 * omega * p.effective_diffusion);
    let root = (Complex64::new(v * v, 0.0) + z).sqrt();
    (Complex64::new(0.0, -2.0 * omega * x) / (v + root)).exp()
}

/// Sampled impulse-response density of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferKernel {
    pub dt: f64,
    /// Density samples (1/s) at lags 0, dt, 2dt, ...
    pub samples: Vec<f64>,
    /// Channel length, m.
    pub x: f64,
    pub velocity_multiplier: f64,
    /// dt·Σ before clipping and renormalisation.
    pub raw_mass: f64,
    /// dt·Σ of the clipped negative part.
    pub negative_mass: f64,
    /// Whether the kernel was cut off by the requested length.
    pub truncated: bool,
}

impl TransferKernel {
    /// Unit mass at lag zero.
    pub fn delta(dt: f64) -> Self {
        Self::from_samples(dt, vec![1.0 / dt], 0.0, 1.0)
    }

    pub fn from_samples(dt: f64, samples: Vec<f64>, x: f64, velocity_multiplier: f64) -> Self {
        let raw_mass = dt * samples.iter().sum::<f64>();
        Self { dt, samples, x, velocity_multiplier, raw_mass, negative_mass: 0.0, truncated: false }
    }

    pub fn mass(&self) -> f64 {
        self.dt * self.samples.iter().sum::<f64>()
    }

    /// First moment dt·Σ t·H.
    pub fn mean(&self) -> f64 {
        self.dt * self.samples.iter().enumerate().map(|(k, h)| k as f64 * self.dt * h).sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.dt
            * self
                .samples
                .iter()
                .enumerate()
                .map(|(k, h)| (k as f64 * self.dt - m).powi(2) * h)
                .sum::<f64>()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Lag at which the cumulative mass first reaches `q` (of the total).
    pub fn quantile(&self, q: f64) -> f64 {
        let total: f64 = self.samples.iter().sum();
        let mut acc = 0.0;
        for (k, h) in self.samples.iter().enumerate() {
            let next = acc + h;
            if next >= q * total {
                let frac = if *h > 0.0 { (q * total - acc) / h } else { 0.0 };
                return (k as f64 - 0.5 + frac) * self.dt;
            }
            acc = next;
        }
        (self.samples.len() as f64 - 0.5) * self.dt
    }

    /// 10–90 % rise time of the step response.
    pub fn rise_time(&self) -> f64 {
        self.quantile(0.9) - self.quantile(0.1)
    }
}

/// Smallest ω with |C̃(x, jω)| < [`OMEGA_CUTOFF`] (|C̃| decreases in ω).
fn cutoff_frequency(x: f64, p: &DispersionParams) -> Result<f64> {
    let below = |w: f64| frequency_response(x, w, p).norm() < OMEGA_CUTOFF;
    let mut hi = 1.0;
    while !below(hi) {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Numeric { stage: "kernel", detail: format!("no frequency cutoff found for x = {x:e}") });
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Bin-averaged density at lags 0..bins with `panels` Gauss-Legendre panels.
fn invert(x: f64, p: &DispersionParams, dt: f64, bins: usize, omega_max: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let (gx, gw) = rule;
    let width = omega_max / panels as f64;
    let mut h = vec![0.0; bins];
    for panel in 0..panels {
        let a = panel as f64 * width;
        for (xi, wi) in gx.iter().zip(gw) {
            let omega = a + 0.5 * width * (xi + 1.0);
            let c = frequency_response(x, omega, p) * (0.5 * width * wi * sinc(0.5 * omega * dt));
            // e^{jω k dt} by repeated rotation.
            let step = Complex64::from_polar(1.0, omega * dt);
            let mut rot = Complex64::new(1.0, 0.0);
            for hk in h.iter_mut() {
                *hk += (c * rot).re;
                rot *= step;
            }
        }
    }
    for hk in &mut h {
        *hk /= PI;
    }
    h
}

/// Impulse response of a channel of length `x` for the given dispersion
/// parameters (use [`DispersionParams::at_multiplier`] for `n·v_eff`),
/// sampled at step `dt` for at most `max_len` lags.
pub fn kernel(x: f64, p: &DispersionParams, dt: f64, max_len: usize) -> Result<TransferKernel> {
    kernel_tagged(x, p, dt, max_len, 1.0)
}

fn kernel_tagged(x: f64, p: &DispersionParams, dt: f64, max_len: usize, multiplier: f64) -> Result<TransferKernel> {
    p.validate()?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain(format!("channel length must be non-negative, got {x}")));
    }
    if !(dt.is_finite() && dt > 0.0) || max_len == 0 {
        return Err(Error::Validation("kernel grid needs dt > 0 and at least one sample".into()));
    }
    let mean = p.mean_delay(x);
    let sd = p.delay_variance(x).sqrt();
    if mean + 8.0 * sd < 0.5 * dt {
        // All of the mass lands in the first bin.
        let mut k = TransferKernel::delta(dt);
        k.x = x;
        k.velocity_multiplier = multiplier;
        return Ok(k);
    }

    let omega_max = cutoff_frequency(x, p)?;
    let rule = gauss_legendre(GL_ORDER);
    let mut t_end = mean + 12.0 * sd + 2.0 * dt;
    loop {
        let wanted = (t_end / dt).ceil() as usize + 1;
        let bins = wanted.min(max_len);
        let truncated = wanted > max_len;

        // Start with about one panel per half turn of the fastest phasor.
        let mut panels = ((omega_max * bins as f64 * dt / PI).ceil() as usize).max(8);
        let mut h = invert(x, p, dt, bins, omega_max, panels, &rule);
        loop {
            if (panels * GL_ORDER) as f64 * bins as f64 > MAX_NODE_BINS {
                return Err(Error::Numeric {
                    stage: "kernel",
                    detail: format!("quadrature did not converge for x = {x:e}, v = {:e} with {panels} panels", p.velocity),
                });
            }
            panels *= 2;
            let finer = invert(x, p, dt, bins, omega_max, panels, &rule);
            let peak = finer.iter().copied().fold(0.0, f64::max);
            let change = h.iter().zip(&finer).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            h = finer;
            if change <= REFINE_RTOL * peak {
                break;
            }
        }

        let peak = h.iter().copied().fold(0.0, f64::max);
        if !truncated {
            let tail_start = bins - (bins / 20).max(1);
            let tail = h[tail_start..].iter().copied().fold(0.0, f64::max);
            if tail > 1e-9 * peak {
                t_end *= 1.5;
                continue;
            }
        }
        return finish(h, x, p, dt, multiplier, truncated, peak);
    }
}

fn finish(mut h: Vec<f64>, x: f64, p: &DispersionParams, dt: f64, multiplier: f64, truncated: bool, peak: f64) -> Result<TransferKernel> {
    let raw_mass = dt * h.iter().sum::<f64>();
    let most_negative = h.iter().copied().fold(0.0, f64::min);
    if -most_negative > NEGATIVE_LOBE_LIMIT * peak {
        return Err(Error::Numeric {
            stage: "kernel",
            detail: format!("negative lobe {most_negative:e} exceeds 1% of peak {peak:e} (x = {x:e}, v = {:e})", p.velocity),
        });
    }
    let negative_mass = -dt * h.iter().filter(|v| **v < 0.0).sum::<f64>();
    for v in &mut h {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    if !truncated {
        if (raw_mass - 1.0).abs() > RAW_MASS_TOL {
            return Err(Error::Numeric {
                stage: "kernel",
                detail: format!("raw kernel mass {raw_mass} deviates from 1 (x = {x:e}, v = {:e})", p.velocity),
            });
        }
        let mass = dt * h.iter().sum::<f64>();
        for v in &mut h {
            *v /= mass;
        }
    }
    Ok(TransferKernel { dt, samples: h, x, velocity_multiplier: multiplier, raw_mass, negative_mass, truncated })
}

type CacheKey = (u64, u64, u64, u64, u64, usize);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<TransferKernel>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<TransferKernel>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Kernel of a channel carrying `n·v_eff`, memoised on
/// (x, v_eff, D_eff, dt, n, max_len).
pub fn cached_kernel(x: f64, n: f64, p: &DispersionParams, dt: f64, max_len: usize) -> Result<Arc<TransferKernel>> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Validation(format!("velocity multiplier must be positive, got {n}")));
    }
    let key = (
        x.to_bits(),
        p.velocity.to_bits(),
        p.effective_diffusion.to_bits(),
        dt.to_bits(),
        n.to_bits(),
        max_len,
    );
    if let Some(k) = cache().read().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(Arc::clone(k));
    }
    let k = Arc::new(kernel_tagged(x, &p.at_multiplier(n), dt, max_len, n)?);
    let mut map = cache().write().unwrap_or_else(|e| e.into_inner());
    Ok(Arc::clone(map.entry(key).or_insert(k)))
}

/// Number of kernels currently memoised.
pub fn cache_len() -> usize {
    cache().read().unwrap_or_else(|e| e.into_inner()).len()
}

/// Output of a channel of length `x` driven by `f` at its inlet.
pub fn apply_channel(f: &ConcentrationSignal, x: f64, p: &DispersionParams) -> Result<ConcentrationSignal> {
    apply_channel_n(f, x, 1.0, p)
}

/// As [`apply_channel`] with the flow at `n·v_eff`.
pub fn apply_channel_n(f: &ConcentrationSignal, x: f64, n: f64, p: &DispersionParams) -> Result<ConcentrationSignal> {
    if x == 0.0 {
        return Ok(f.clone());
    }
    f.convolve(&*cached_kernel(x, n, p, f.dt, f.len())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate, PulseSpec, TimeGrid};
    use approx::assert_relative_eq;

    fn params() -> DispersionParams {
        DispersionParams::new(1e-8, 1e-8, 1e-3).unwrap()
    }

    /// Inverse-Gaussian first-passage density, the exact inverse of the
    /// Laplace-domain solution; used here only to check the quadrature.
    fn closed_form(x: f64, p: &DispersionParams, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let d = p.effective_diffusion;
        x / (4.0 * PI * d * t.powi(3)).sqrt() * (-(x - p.velocity * t).powi(2) / (4.0 * d * t)).exp()
    }

    #[test]
    fn response_limits() {
        let p = params();
        assert_eq!(frequency_response(500e-6, 0.0, &p), Complex64::new(1.0, 0.0));
        for w in [0.0, 1.0, 1e3] {
            assert_eq!(frequency_response(0.0, w, &p), Complex64::new(1.0, 0.0));
        }
        let mut prev = 1.0;
        for i in 1..400 {
            let m = frequency_response(500e-6, i as f64 * 0.5, &p).norm();
            assert!(m < prev && m <= 1.0);
            prev = m;
        }
    }

    #[test]
    fn response_matches_textbook_form() {
        let p = DispersionParams::new(1e-9, 2e-9, 2e-3).unwrap();
        let (x, w) = (300e-6, 7.0);
        let (v, d) = (p.velocity, p.effective_diffusion);
        let root = Complex64::new(v * v, 4.0 * w * d).sqrt();
        let direct = ((v - root) * x / (2.0 * d)).exp();
        let got = frequency_response(x, w, &p);
        assert_relative_eq!(got.re, direct.re, max_relative = 1e-9);
        assert_relative_eq!(got.im, direct.im, max_relative = 1e-9);
    }

    #[test]
    fn kernel_has_unit_mass_and_transit_mean() {
        let p = params();
        let k = kernel(500e-6, &p, 0.005, 4001).unwrap();
        assert!((k.raw_mass - 1.0).abs() < 1e-2);
        assert!((k.mass() - 1.0).abs() < 1e-3);
        assert!(!k.truncated);
        assert_relative_eq!(k.mean(), 0.5, max_relative = 0.02);
        assert!(k.negative_mass < 1e-2);
        assert!(k.samples.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kernel_matches_closed_form_density() {
        let p = params();
        let dt = 0.005;
        let x = 500e-6;
        let k = kernel(x, &p, dt, 4001).unwrap();
        // Bin average of the closed form by Simpson's rule.
        let peak = k.peak();
        for (i, h) in k.samples.iter().enumerate() {
            let t = i as f64 * dt;
            let (a, b) = ((t - 0.5 * dt).max(0.0), t + 0.5 * dt);
            let m = 64;
            let hh = (b - a) / m as f64;
            let mut s = closed_form(x, &p, a) + closed_form(x, &p, b);
            for j in 1..m {
                s += closed_form(x, &p, a + j as f64 * hh) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            let avg = s * hh / 3.0 / dt;
            assert!((h - avg).abs() < 1e-4 * peak, "lag {i}: {h} vs {avg}");
        }
    }

    #[test]
    fn broader_with_more_dispersion() {
        let a = kernel(500e-6, &params(), 0.005, 4001).unwrap();
        let b = kernel(500e-6, &DispersionParams::new(1e-8, 3e-8, 1e-3).unwrap(), 0.005, 4001).unwrap();
        assert!(b.variance() > a.variance());
    }

    #[test]
    fn short_fast_channel_stays_normalised() {
        // Narrower than one sample.
        let k = kernel(20e-6, &params().at_multiplier(5.0), 0.005, 4001).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-3);
        assert!((k.raw_mass - 1.0).abs() < 1e-2);
        let tiny = kernel(1e-9, &params(), 0.005, 4001).unwrap();
        assert_eq!(tiny.samples, vec![200.0]);
    }

    #[test]
    fn truncated_kernel_is_not_renormalised() {
        let k = kernel(500e-6, &params(), 0.005, 80).unwrap();
        assert!(k.truncated);
        assert_eq!(k.samples.len(), 80);
        assert!(k.mass() < 0.9);
    }

    #[test]
    fn taylor_aris_relation() {
        let g = ChannelGeometry::new(20e-6, 10e-6, 1e-3).unwrap();
        assert_eq!(taylor_aris(1e-9, 0.0, &g).unwrap(), 1e-9);
        let mut prev = 0.0;
        for i in 0..10 {
            let de = taylor_aris(1e-9, i as f64 * 1e-4, &g).unwrap();
            assert!(de > prev);
            prev = de;
        }
        let p = DispersionParams::from_effective(1e-8, 1e-3, &g).unwrap();
        assert_relative_eq!(taylor_aris(p.molecular_diffusion, 1e-3, &g).unwrap(), 1e-8, max_relative = 1e-12);
        assert!(p.molecular_diffusion < 1e-8 && p.molecular_diffusion > 9e-9);
        assert!(taylor_aris(0.0, 1e-3, &g).is_err());
        assert!(molecular_diffusion_for(1e-12, 1e-3, &g).is_err());
    }

    #[test]
    fn channel_delays_and_smooths() {
        let grid = TimeGrid::with_horizon(0.0, 0.005, 8.0).unwrap();
        let f = generate(&PulseSpec::rect(8.0, 1.0, 3.0), &grid).unwrap();
        let y = apply_channel(&f, 500e-6, &params()).unwrap();
        assert_relative_eq!(y.centroid().unwrap() - f.centroid().unwrap(), 0.5, max_relative = 0.02);
        assert!(y.max() <= 8.0 + 1e-9);
        assert!(y.at(1.3) < 1.0 && y.at(3.0) > 7.0);
        let zero = ConcentrationSignal::zeros(&grid);
        assert_eq!(apply_channel(&zero, 500e-6, &params()).unwrap().max(), 0.0);
        let near = apply_channel(&f, 1e-9, &params()).unwrap();
        assert_eq!(near, f);
    }

    #[test]
    fn cache_returns_shared_kernel() {
        let p = DispersionParams::new(1e-8, 1e-8, 1.234e-3).unwrap();
        let a = cached_kernel(321e-6, 2.0, &p, 0.005, 4001).unwrap();
        let b = cached_kernel(321e-6, 2.0, &p, 0.005, 4001).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.velocity_multiplier, 2.0);
        assert_relative_eq!(a.mean(), 321e-6 / 2.468e-3, max_relative = 0.02);
    }

    #[test]
    fn cache_is_safe_under_concurrency() {
        let p = DispersionParams::new(1e-8, 1e-8, 0.777e-3).unwrap();
        let ks: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8).map(|_| s.spawn(|| cached_kernel(200e-6, 1.0, &p, 0.005, 2000).unwrap())).collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for k in &ks[1..] {
            assert_eq!(k.samples, ks[0].samples);
        }
    }
}
