//! Uniformly sampled concentration time series.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transfer::TransferKernel;

/// Relative tolerance used when deciding whether two sampling steps agree.
const DT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || !t0.is_finite() {
            return Err(Error::Validation(format!("time grid needs finite t0 and dt > 0 (t0={t0}, dt={dt})")));
        }
        if len == 0 {
            return Err(Error::Validation("time grid must contain at least one sample".into()));
        }
        Ok(Self { t0, dt, len })
    }

    /// Grid covering [t0, t0 + horizon] inclusive.
    pub fn with_horizon(t0: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::Validation(format!("horizon must be non-negative, got {horizon}")));
        }
        Self::new(t0, dt, (horizon / dt).round() as usize + 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Nearest sample index of time `t` (may lie outside the grid).
    pub fn index_of(&self, t: f64) -> i64 {
        ((t - self.t0) / self.dt).round() as i64
    }

    pub fn horizon(&self) -> f64 {
        (self.len - 1) as f64 * self.dt
    }
}

impl Default for TimeGrid {
    /// 0–20 s at 5 ms.
    fn default() -> Self {
        Self { t0: 0.0, dt: 0.005, len: 4001 }
    }
}

/// Analytic description of an injected concentration profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSpec {
    /// `amplitude · u(t − start)`.
    Step { amplitude: f64, #[serde(default)] start: f64 },
    /// `amplitude · [u(t − start) − u(t − stop)]`.
    Rectangle { amplitude: f64, start: f64, stop: f64 },
    /// `amplitude · exp(−(t − centre)² / (2 width²))`.
    Gaussian { amplitude: f64, centre: f64, width: f64 },
}

impl PulseSpec {
    pub fn constant(amplitude: f64) -> Self {
        PulseSpec::Step { amplitude, start: 0.0 }
    }

    pub fn rect(amplitude: f64, start: f64, stop: f64) -> Self {
        PulseSpec::Rectangle { amplitude, start, stop }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            PulseSpec::Step { amplitude, .. }
            | PulseSpec::Rectangle { amplitude, .. }
            | PulseSpec::Gaussian { amplitude, .. } => amplitude,
        }
    }

    /// Same shape at a different amplitude.
    pub fn with_amplitude(&self, a: f64) -> Self {
        let mut s = *self;
        match &mut s {
            PulseSpec::Step { amplitude, .. }
            | PulseSpec::Rectangle { amplitude, .. }
            | PulseSpec::Gaussian { amplitude, .. } => *amplitude = a,
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.amplitude();
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Validation(format!("pulse amplitude must be non-negative, got {a}")));
        }
        match *self {
            PulseSpec::Step { start, .. } if !start.is_finite() => {
                Err(Error::Validation("step start must be finite".into()))
            }
            PulseSpec::Rectangle { start, stop, .. } if !(start.is_finite() && stop.is_finite() && stop > start) => {
                Err(Error::Validation(format!("rectangle needs start < stop, got [{start}, {stop})")))
            }
            PulseSpec::Gaussian { centre, width, .. } if !(centre.is_finite() && width.is_finite() && width > 0.0) => {
                Err(Error::Validation("gaussian needs a finite centre and positive width".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSignal {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

/// Samples a pulse on a grid.
///
/// Step and rectangle edges snap to the nearest grid point, so a rectangle
/// covers exactly `round((stop − start)/dt)` samples starting at the sample
/// nearest `start`; on aligned grids this is the half-open interval
/// `[start, stop)`.
pub fn generate(spec: &PulseSpec, grid: &TimeGrid) -> Result<ConcentrationSignal> {
    spec.validate()?;
    let n = grid.len as i64;
    let fill = |from: i64, to: i64, a: f64| {
        let mut s = vec![0.0; grid.len];
        for v in &mut s[from.clamp(0, n) as usize..to.clamp(0, n) as usize] {
            *v = a;
        }
        s
    };
    let samples = match *spec {
        PulseSpec::Step { amplitude, start } => fill(grid.index_of(start), n, amplitude),
        PulseSpec::Rectangle { amplitude, start, stop } => {
            let from = grid.index_of(start);
            let width = ((stop - start) / grid.dt).round() as i64;
            fill(from, from + width, amplitude)
        }
        PulseSpec::Gaussian { amplitude, centre, width } => (0..grid.len)
            .map(|i| {
                let u = (grid.time(i) - centre) / width;
                amplitude * (-0.5 * u * u).exp()
            })
            .collect(),
    };
    ConcentrationSignal::new(grid.t0, grid.dt, samples)
}

/// Discrete causal convolution `y[k] = dt · Σ a[m] b[k−m]` over the full
/// support (length `a.len() + b.len() − 1`).
pub(crate) fn convolve_samples(a: &[f64], b: &[f64], dt: f64, out_len: usize) -> Vec<f64> {
    let mut y = vec![0.0; out_len];
    if a.is_empty() || b.is_empty() {
        return y;
    }
    for (k, yk) in y.iter_mut().enumerate() {
        let lo = k.saturating_sub(b.len() - 1);
        let hi = k.min(a.len() - 1);
        if lo > hi {
            continue;
        }
        let mut acc = 0.0;
        for m in lo..=hi {
            acc += a[m] * b[k - m];
        }
        *yk = acc * dt;
    }
    y
}

impl ConcentrationSignal {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        TimeGrid::new(t0, dt, samples.len().max(1))?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite")));
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn zeros(grid: &TimeGrid) -> Self {
        Self { t0: grid.t0, dt: grid.dt, samples: vec![0.0; grid.len] }
    }

    pub fn constant(grid: &TimeGrid, value: f64) -> Self {
        Self { t0: grid.t0, dt: grid.dt, samples: vec![value; grid.len] }
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { t0: self.t0, dt: self.dt, len: self.samples.len() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(|i| self.time(i))
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Time of the first maximum.
    pub fn peak_time(&self) -> f64 {
        let mut best = 0;
        for (i, v) in self.samples.iter().enumerate() {
            if *v > self.samples[best] {
                best = i;
            }
        }
        self.time(best)
    }

    /// Riemann sum dt·Σ samples.
    pub fn integral(&self) -> f64 {
        self.dt * self.samples.iter().sum::<f64>()
    }

    /// Centre of mass Σ t·c / Σ c, or `None` for an all-zero signal.
    pub fn centroid(&self) -> Option<f64> {
        let m: f64 = self.samples.iter().sum();
        (m > 0.0).then(|| self.times().zip(&self.samples).map(|(t, c)| t * c).sum::<f64>() / m)
    }

    /// Sample at time `t` (nearest grid point; zero outside the grid).
    pub fn at(&self, t: f64) -> f64 {
        let i = ((t - self.t0) / self.dt).round();
        if i < 0.0 || i >= self.samples.len() as f64 {
            0.0
        } else {
            self.samples[i as usize]
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { t0: self.t0, dt: self.dt, samples: self.samples.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise binary operation on a shared grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn clip_negative(mut self) -> Self {
        for v in &mut self.samples {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.samples.len() != other.samples.len() {
            return Err(Error::Grid(format!("lengths differ: {} vs {}", self.samples.len(), other.samples.len())));
        }
        self.check_compatible_step(other.dt)?;
        if (self.t0 - other.t0).abs() > DT_RTOL * self.dt {
            return Err(Error::Grid(format!("start times differ: {} vs {}", self.t0, other.t0)));
        }
        Ok(())
    }

    fn check_compatible_step(&self, dt: f64) -> Result<()> {
        if (self.dt - dt).abs() > DT_RTOL * self.dt {
            return Err(Error::Grid(format!("sampling steps differ: {} vs {}", self.dt, dt)));
        }
        Ok(())
    }

    /// Full-support convolution with a kernel sampled at the same step.
    /// The output starts at `self.t0` and is clipped at zero.
    pub fn convolve_full(&self, kernel: &TransferKernel) -> Result<Self> {
        self.check_compatible_step(kernel.dt)?;
        let n = self.samples.len() + kernel.samples.len() - 1;
        let y = convolve_samples(&self.samples, &kernel.samples, self.dt, n);
        Ok(Self { t0: self.t0, dt: self.dt, samples: y }.clip_negative())
    }

    /// Convolution truncated to this signal's own grid.
    pub fn convolve(&self, kernel: &TransferKernel) -> Result<Self> {
        self.check_compatible_step(kernel.dt)?;
        let y = convolve_samples(&self.samples, &kernel.samples, self.dt, self.samples.len());
        Ok(Self { t0: self.t0, dt: self.dt, samples: y }.clip_negative())
    }

    /// Shift right by `tau` seconds (snapped to the grid), zero-filling.
    /// Negative `tau` shifts left.
    pub fn delay(&self, tau: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::Validation("delay must be finite".into()));
        }
        let k = (tau / self.dt).round() as i64;
        let n = self.samples.len() as i64;
        let samples = (0..n)
            .map(|i| {
                let j = i - k;
                if (0..n).contains(&j) {
                    self.samples[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { t0: self.t0, dt: self.dt, samples })
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// Keeps the first `n` samples (or pads with zeros up to `n`).
    pub fn resized(&self, n: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(n, 0.0);
        Self { t0: self.t0, dt: self.dt, samples }
    }
}

/// Weighted pointwise sum Σ a_i·f_i on a shared grid.
pub fn combine(terms: &[(f64, &ConcentrationSignal)]) -> Result<ConcentrationSignal> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::Validation("combine needs at least one signal".into()))?;
    let mut out = ConcentrationSignal::zeros(&first.grid());
    for (a, f) in terms {
        first.check_same_grid(f)?;
        for (o, v) in out.samples.iter_mut().zip(&f.samples) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Renders signals sharing one grid as CSV with a `t` column.
pub fn to_csv(columns: &[(&str, &ConcentrationSignal)]) -> Result<String> {
    let (_, first) = columns
        .first()
        .ok_or_else(|| Error::Validation("no columns to write".into()))?;
    for (_, s) in columns {
        first.check_same_grid(s)?;
    }
    let mut out = String::from("t");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..first.len() {
        let _ = write!(out, "{}", first.time(i));
        for (_, s) in columns {
            let _ = write!(out, ",{}", s.samples[i]);
        }
        out.push('\n');
    }
    Ok(out)
}
