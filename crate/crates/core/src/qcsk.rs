//! Four-level concentration shift keying: a 2:4-decoder transmitter built
//! from four AND gates and a threshold-bank receiver.
//!
//! Levels are indexed `i = 2·b2 + b1`. Transmitter unit `i + 1` is selected
//! by the bit pair and emits `Amp^{i+1}/8`; the receiver's three detection
//! units report which thresholds the received peak exceeds, and two logic
//! back-ends turn that thermometer code into (Y2, Y1).

use serde::{Deserialize, Serialize};

use crate::circuits::{and_core, AndStages, AndTrace, HIGH_FRACTION};
use crate::error::{Error, Result};
use crate::hydraulics::{check_merge, MultiplierCheck};
use crate::operators::{plateau, BlockGeometry, Blocks};
use crate::signal::{combine, generate, ConcentrationSignal, PulseSpec, TimeGrid};
use crate::transfer::{cached_kernel, DispersionParams};
use crate::UM;

/// Default fraction of the expected HIGH level used for bit decisions.
pub const DECISION_FRACTION: f64 = 0.5;

/// Bit pair `(b2, b1)`.
pub type Bits = (bool, bool);

pub fn level_of(bits: Bits) -> usize {
    2 * bits.0 as usize + bits.1 as usize
}

pub fn bits_of(level: usize) -> Bits {
    (level & 2 != 0, level & 1 != 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxParams {
    pub grid: TimeGrid,
    /// Waveform of a HIGH input bit; its amplitude is C₀.
    pub symbol: PulseSpec,
    pub p1: PulseSpec,
    pub p2: PulseSpec,
    pub m0: f64,
    pub thl0: f64,
    /// Amplifier supply of units 1..4.
    pub amp: [f64; 4],
    /// L_B1..L_B4 in metres: buffers of the complement (n=2), product
    /// (n=3), threshold (n=7) and amplify (n=8) stages.
    pub buffers: [f64; 4],
    pub transport: f64,
    pub combine: f64,
    pub reaction: f64,
    pub l_a2: f64,
    pub dispersion: DispersionParams,
    pub theta: f64,
}

impl TxParams {
    pub fn validate(&self) -> Result<()> {
        let [a1, a2, a3, a4] = self.amp;
        if !(a4 > a3 && a3 > a2 && a2 > a1 && a1 >= 0.0) {
            return Err(Error::Validation(format!("amplifier levels must satisfy A4 > A3 > A2 > A1 >= 0, got {:?}", self.amp)));
        }
        for s in [&self.symbol, &self.p1, &self.p2] {
            s.validate()?;
        }
        for (name, v) in [("M", self.m0), ("ThL", self.thl0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} level must be non-negative, got {v}")));
            }
        }
        if self.buffers.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Validation(format!("buffer lengths must be positive, got {:?}", self.buffers)));
        }
        self.dispersion.validate()?;
        Blocks::with_theta(self.dispersion, self.theta)?;
        BlockGeometry::new(self.transport, self.combine, 0.0, self.reaction)?;
        Ok(())
    }

    pub fn c0(&self) -> f64 {
        self.symbol.amplitude()
    }

    fn blocks(&self) -> Blocks {
        Blocks { dispersion: self.dispersion, theta: self.theta }
    }

    /// Block geometry of a stage whose buffer is `buffer` at multiplier `n`.
    fn stage(&self, buffer: f64, n: f64) -> BlockGeometry {
        BlockGeometry {
            transport: self.transport,
            combine: self.combine,
            buffer: buffer / n,
            reaction: self.reaction,
            enforce_mixing: false,
        }
    }

    pub fn stages(&self) -> AndStages {
        AndStages {
            multiplier: 3.0,
            product: self.stage(self.buffers[1], 3.0),
            residual: self.stage(self.buffers[2], 7.0),
            amplify: self.stage(self.buffers[3], 8.0),
            l_a2: self.l_a2,
        }
    }

    /// Plateau of unit `unit` (1..4) when selected.
    pub fn expected_high(&self, unit: usize) -> f64 {
        self.stages().expected_high(self.amp[unit - 1])
    }
}

/// The four unit outputs, `units[k]` belonging to unit `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TxOutput {
    pub bits: Bits,
    pub units: Vec<AndTrace>,
}

impl TxOutput {
    /// Output of the unit the bit pair selects.
    pub fn selected(&self) -> &ConcentrationSignal {
        &self.units[level_of(self.bits)].output
    }

    pub fn peaks(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.output.max()).collect()
    }
}

/// Runs the transmitter for one symbol.
pub fn tx_modulate(params: &TxParams, bits: Bits) -> Result<TxOutput> {
    params.validate()?;
    let g = &params.grid;
    let b = params.blocks();
    let front = params.stage(params.buffers[0], 2.0);
    let t = |f: &ConcentrationSignal| b.transport(f, 1.0, &front);
    let input = |on: bool| -> Result<ConcentrationSignal> {
        if on {
            generate(&params.symbol, g)
        } else {
            Ok(ConcentrationSignal::zeros(g))
        }
    };
    let (i2, i1) = (t(&input(bits.0)?)?, t(&input(bits.1)?)?);

    // Direct inputs travel the same length as the complement stage.
    let direct_len = params.combine + params.buffers[0] + params.reaction;
    let direct = |f: &ConcentrationSignal| -> Result<ConcentrationSignal> { Ok(b.channel(f, 2.0, direct_len)?.scale(0.5)) };
    let complement =
        |p: &PulseSpec, i: &ConcentrationSignal| -> Result<ConcentrationSignal> { b.residual(&t(&generate(p, g)?)?, i, 2.0, &front) };
    let (d1, d2) = (direct(&i1)?, direct(&i2)?);
    let (c1, c2) = (complement(&params.p1, &i1)?, complement(&params.p2, &i2)?);

    let supply = |level: f64| t(&ConcentrationSignal::constant(g, level));
    let m = supply(params.m0)?;
    let thl = supply(params.thl0)?;
    let stages = params.stages();
    // Unit k+1 takes (b1 side, b2 side) = direct or complement per the bits
    // of k: unit 1 = P1·P2, unit 2 = I1·P2, unit 3 = P1·I2, unit 4 = I1·I2.
    let wiring: [(&ConcentrationSignal, &ConcentrationSignal); 4] = [(&c1, &c2), (&d1, &c2), (&c1, &d2), (&d1, &d2)];
    let units = std::thread::scope(|s| {
        let handles: Vec<_> = wiring
            .iter()
            .zip(params.amp)
            .map(|(&(x1, x2), amp)| {
                let (b, stages, m, thl) = (&b, &stages, &m, &thl);
                s.spawn(move || and_core(b, stages, x1, x2, m, thl, &supply(amp)?))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("transmitter unit panicked")).collect::<Result<Vec<_>>>()
    })?;
    Ok(TxOutput { bits, units })
}

/// One-hot check: only the selected unit exceeds `HIGH_FRACTION` of its
/// plateau; with an all-zero amplifier row every unit stays below 5 % of
/// the largest unit plateau.
pub fn tx_one_hot(params: &TxParams, out: &TxOutput) -> bool {
    let sel = level_of(out.bits);
    let top = (1..=4).map(|u| params.expected_high(u)).fold(0.0, f64::max);
    out.units.iter().enumerate().all(|(k, u)| {
        let expected = params.expected_high(k + 1);
        let peak = u.output.max();
        if expected == 0.0 {
            peak < 0.05 * top
        } else if k == sel {
            peak > HIGH_FRACTION * expected
        } else {
            peak <= HIGH_FRACTION * expected
        }
    })
}

/// How the NOT stage of the Y1 path weights its two inlets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotWeighting {
    /// Weights from the inlet flows: NOT enters at v (1/11), the XOR stream
    /// at 10·v (10/11).
    Flow,
    /// The residual block's default weights with NOT as its first argument
    /// (10/11 for NOT, 1/11 for the XOR stream).
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxParams {
    /// Detection thresholds T1 of units 1..3.
    pub t1: [f64; 3],
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    /// Amplifier supplies A1..A5.
    pub a: [f64; 5],
    pub not0: f64,
    pub v0: f64,
    /// Channel lengths L1..L20, metres.
    pub lengths: [f64; 20],
    /// Base buffer length; a stage at multiplier n uses n times this.
    pub buffer: f64,
    pub width: f64,
    pub height: f64,
    pub dispersion: DispersionParams,
    pub theta: f64,
    pub decision_fraction: f64,
    pub not_weighting: NotWeighting,
}

/// Signals along the Y1 path.
#[derive(Debug, Clone, PartialEq)]
pub struct Y1Trace {
    pub r1: ConcentrationSignal,
    pub r2: ConcentrationSignal,
    pub xor: ConcentrationSignal,
    pub not23: ConcentrationSignal,
    pub not1: ConcentrationSignal,
    pub mix: ConcentrationSignal,
    pub y1: ConcentrationSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxOutput {
    pub b: [ConcentrationSignal; 3],
    pub y2: ConcentrationSignal,
    pub y1: Y1Trace,
    pub bits: Bits,
}

impl RxParams {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.t1;
        if !(0.0 <= a && a < b && b < c) {
            return Err(Error::Validation(format!("thresholds must satisfy T1¹ < T1² < T1³, got {:?}", self.t1)));
        }
        if self.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Validation("receiver channel lengths must be positive".into()));
        }
        let levels = [self.t2, self.t3, self.t4, self.not0, self.v0];
        if levels.iter().chain(&self.a).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("receiver injections must be non-negative".into()));
        }
        for (name, v) in [("buffer", self.buffer), ("width", self.width), ("height", self.height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("receiver {name} must be positive, got {v}")));
            }
        }
        if !(self.decision_fraction > 0.0 && self.decision_fraction < 1.0) {
            return Err(Error::Validation(format!("decision fraction must lie in (0, 1), got {}", self.decision_fraction)));
        }
        self.dispersion.validate()?;
        Blocks::with_theta(self.dispersion, self.theta)?;
        Ok(())
    }

    /// Channel length L_i (1-based).
    pub fn l(&self, i: usize) -> f64 {
        self.lengths[i - 1]
    }

    fn blocks(&self) -> Blocks {
        Blocks { dispersion: self.dispersion, theta: self.theta }
    }

    /// Transport L1, combining L2, reaction L4.
    pub fn geometry(&self) -> BlockGeometry {
        BlockGeometry { transport: self.l(1), combine: self.l(2), buffer: self.buffer, reaction: self.l(4), enforce_mixing: false }
    }

    /// Composite path lengths used along the back-end.
    fn paths(&self) -> RxPaths {
        let (h, w) = (self.height, self.width);
        let l = |i| self.l(i);
        RxPaths {
            y2_merge: (2.0 * l(2) + l(6) + h) / 2.0,
            split: (3.0 * l(2) + l(9) + 2.0 * l(10) + l(11) + h + 2.0 * w) / 2.0,
            inner: l(2) + l(12) + l(4),
            xor_exit: (l(2) + l(9) + 2.0 * w) / 2.0,
            not23_exit: (2.0 * l(2) + l(18) + h) / 2.0,
            b1_delay: l(16),
            not1_exit: (2.0 * l(2) + 2.0 * l(17) + l(18) + h) / 2.0,
        }
    }

    fn not_weights(&self) -> (f64, f64) {
        match self.not_weighting {
            NotWeighting::Flow => (1.0 / 11.0, 10.0 / 11.0),
            NotWeighting::Literal => (10.0 / 11.0, 1.0 / 11.0),
        }
    }

    pub fn expected_y2(&self) -> f64 {
        plateau::amplify(1.0, self.a[1], 8.0)
    }

    pub fn expected_y1(&self) -> f64 {
        plateau::amplify(1.0, self.a[4], 17.0)
    }
}

struct RxPaths {
    y2_merge: f64,
    split: f64,
    inner: f64,
    xor_exit: f64,
    not23_exit: f64,
    b1_delay: f64,
    not1_exit: f64,
}

/// The three detection units: threshold the received signal against T1^i,
/// then amplify.
pub fn rx_frontend(c_o: &ConcentrationSignal, rx: &RxParams) -> Result<[ConcentrationSignal; 3]> {
    rx.validate()?;
    let b = rx.blocks();
    let g = rx.geometry();
    let grid = c_o.grid();
    let t = |f: &ConcentrationSignal| b.transport(f, 1.0, &g);
    let input = t(c_o)?;
    let amp = t(&ConcentrationSignal::constant(&grid, rx.a[0]))?;
    let units = std::thread::scope(|s| {
        let handles: Vec<_> = rx
            .t1
            .iter()
            .map(|&thr| {
                let (b, g, input, amp) = (&b, &g, &input, &amp);
                s.spawn(move || {
                    let thr = b.transport(&ConcentrationSignal::constant(&grid, thr), 1.0, g)?;
                    b.threshold_amplify(input, &thr, amp, 2.0, g)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("detection unit panicked")).collect::<Result<Vec<_>>>()
    })?;
    let [b1, b2, b3]: [ConcentrationSignal; 3] = units.try_into().expect("three detection units");
    Ok([b1, b2, b3])
}

/// Y2 = B2·B1.
pub fn rx_y2(b1: &ConcentrationSignal, b2: &ConcentrationSignal, rx: &RxParams) -> Result<ConcentrationSignal> {
    let b = rx.blocks();
    let g = rx.geometry();
    let grid = b1.grid();
    let t = |f: &ConcentrationSignal, n: f64| b.transport(f, n, &g);
    let merged = b.channel(&combine(&[(0.5, b1), (0.5, b2)])?, 3.0, rx.paths().y2_merge)?;
    b.threshold_amplify(
        &t(&merged, 6.0)?,
        &t(&ConcentrationSignal::constant(&grid, rx.t2), 1.0)?,
        &t(&ConcentrationSignal::constant(&grid, rx.a[1]), 1.0)?,
        7.0,
        &g,
    )
}

/// Y1 = B1·(B3 ⊙ B2).
pub fn rx_y1(b1: &ConcentrationSignal, b2: &ConcentrationSignal, b3: &ConcentrationSignal, rx: &RxParams) -> Result<Y1Trace> {
    let b = rx.blocks();
    let g = rx.geometry();
    let grid = b1.grid();
    let paths = rx.paths();
    let supply = |level: f64| b.transport(&ConcentrationSignal::constant(&grid, level), 1.0, &g);

    // B2 and B3 split to 1.5·v, meet again at 3·v, then meet T3.
    let outer = b.channel(&combine(&[(0.5, b2), (0.5, b3)])?, 1.5, paths.split)?;
    let outer = b.transport(&outer, 3.0, &g)?;
    let inner = b.channel(&outer, 4.0, paths.inner)?.scale(0.75);
    let (r1, r2) = rayon::join(
        || b.amplify(&inner, &supply(rx.a[2])?, 5.0, &g),
        || b.threshold_amplify(&outer, &supply(rx.t3)?, &supply(rx.a[3])?, 4.0, &g),
    );
    let (r1, r2) = (r1?, r2?);

    let xor = r1.zip_with(&r2, |x, y| 0.5 * (x - x.min(y)))?;
    let xor = b.channel(&b.channel(&b.channel(&xor, 5.0, paths.xor_exit)?, 10.0, rx.l(14))?, 10.0, rx.l(4))?;

    let (w_not, w_xor) = rx.not_weights();
    let not23 = b.weighted_residual(&supply(rx.not0)?, w_not, &xor, w_xor, 11.0, &g)?;
    let not23 = b.channel(&not23, 11.0, paths.not23_exit)?;

    let b1_late = b.channel(b1, 3.0, paths.b1_delay)?;
    let not1 = b.product(&b1_late, &supply(rx.v0)?, 4.0, &g)?;
    let not1 = b.channel(&not1, 4.0, paths.not1_exit)?;

    let mix = combine(&[(4.0 / 15.0, &not1), (11.0 / 15.0, &not23)])?;
    let y1 = b.threshold_amplify(&b.transport(&mix, 15.0, &g)?, &supply(rx.t4)?, &supply(rx.a[4])?, 15.0, &g)?;
    Ok(Y1Trace { r1, r2, xor, not23, not1, mix, y1 })
}

/// Bit decisions: HIGH when the peak exceeds `decision_fraction` of the
/// expected plateau.
pub fn demodulate(y2: &ConcentrationSignal, y1: &ConcentrationSignal, rx: &RxParams) -> Bits {
    (
        y2.max() > rx.decision_fraction * rx.expected_y2(),
        y1.max() > rx.decision_fraction * rx.expected_y1(),
    )
}

/// Full receiver: front-end, both back-ends and the bit decision.
pub fn rx_demodulate(c_o: &ConcentrationSignal, rx: &RxParams) -> Result<RxOutput> {
    let [b1, b2, b3] = rx_frontend(c_o, rx)?;
    check_alignment(rx, c_o.dt, c_o.len())?;
    let (y2, y1) = rayon::join(|| rx_y2(&b1, &b2, rx), || rx_y1(&b1, &b2, &b3, rx));
    let (y2, y1) = (y2?, y1?);
    let bits = demodulate(&y2, &y1.y1, rx);
    Ok(RxOutput { b: [b1, b2, b3], y2, y1, bits })
}

/// Transmit `bits` and demodulate the selected unit's output.
pub fn end_to_end(bits: Bits, tx: &TxParams, rx: &RxParams) -> Result<(Bits, TxOutput, RxOutput)> {
    let sent = tx_modulate(tx, bits)?;
    let received = rx_demodulate(sent.selected(), rx)?;
    Ok((received.bits, sent, received))
}

/// Mean transit times (s) from the detection units to the final merge
/// along the B1 (NOT¹) and B2/B3 (NOT^{2&3}) paths.
pub fn merge_arrivals(rx: &RxParams) -> (f64, f64) {
    let v = rx.dispersion.velocity;
    let g = rx.geometry();
    let p = rx.paths();
    let seg = |len: f64, n: f64| len / (n * v);
    let reacting = |n: f64| seg(g.pre_reaction(n), n) + seg(g.reaction, n);
    let not1 = seg(p.b1_delay, 3.0) + reacting(4.0) + seg(p.not1_exit, 4.0);
    let not23 = seg(p.split, 1.5)
        + seg(g.transport, 3.0)
        + seg(p.inner, 4.0)
        + reacting(5.0)
        + seg(p.xor_exit, 5.0)
        + seg(rx.l(14), 10.0)
        + seg(rx.l(4), 10.0)
        + reacting(11.0)
        + seg(p.not23_exit, 11.0);
    (not1, not23)
}

/// Rejects receiver layouts whose two NOT streams reach the final merge
/// more than half a rise time apart. The rise time is that of the slower
/// of the two channels feeding the merge.
pub fn check_alignment(rx: &RxParams, dt: f64, len: usize) -> Result<()> {
    let (a, b) = merge_arrivals(rx);
    let p = rx.paths();
    let k1 = cached_kernel(p.not1_exit, 4.0, &rx.dispersion, dt, len)?;
    let k2 = cached_kernel(p.not23_exit, 11.0, &rx.dispersion, dt, len)?;
    let allowance = 0.5 * k1.rise_time().max(k2.rise_time());
    let mismatch = (a - b).abs();
    if mismatch > allowance {
        return Err(Error::Alignment { mismatch, allowance });
    }
    Ok(())
}

/// Plateau of the Y1 mixing stream for a detection pattern (B1, B2, B3).
pub fn y1_mix_plateau(rx: &RxParams, pattern: [bool; 3]) -> f64 {
    let bl = plateau::amplify(1.0, rx.a[0], 3.0);
    let [b1, b2, b3] = pattern.map(|on| if on { bl } else { 0.0 });
    let outer = 0.5 * (b2 + b3);
    let r1 = plateau::amplify(0.75 * outer, rx.a[2], 5.0);
    let r2 = plateau::threshold_amplify(outer, rx.t3, rx.a[3], 4.0);
    let xor = 0.5 * (r1 - r1.min(r2));
    let (w_not, w_xor) = rx.not_weights();
    let not23 = (w_not * rx.not0 - w_xor * xor).max(0.0);
    let not1 = plateau::product(b1, rx.v0, 4.0);
    4.0 / 15.0 * not1 + 11.0 / 15.0 * not23
}

/// Range of T4 for which the plateau algebra of the Y1 path yields
/// Y1 = B1·(B3 ⊙ B2) on the four thermometer codes. `None` if empty.
pub fn y1_threshold_window(rx: &RxParams) -> Option<(f64, f64)> {
    let codes = [[false, false, false], [true, false, false], [true, true, false], [true, true, true]];
    let (mut low_max, mut high_min) = (0.0f64, f64::INFINITY);
    for c in codes {
        let mix = y1_mix_plateau(rx, c);
        if c[0] && (c[1] == c[2]) {
            high_min = high_min.min(mix);
        } else {
            low_max = low_max.max(mix);
        }
    }
    // HIGH iff (n−1)/n·mix > T4/n with n = 16.
    let (lo, hi) = (15.0 * low_max, 15.0 * high_min);
    (lo < hi).then_some((lo, hi))
}

/// Flow-conservation checks of every junction in the receiver.
pub fn rx_multiplier_report(rx: &RxParams) -> Vec<MultiplierCheck> {
    let (w_not, w_xor) = rx.not_weights();
    vec![
        check_merge("detection: C_O + T1", &[1.0, 1.0], 2.0, &[0.5, 0.5]),
        check_merge("detection: residual + A1", &[2.0, 1.0], 3.0, &[]),
        check_merge("Y2: B1 + B2", &[3.0, 3.0], 6.0, &[0.5, 0.5]),
        check_merge("Y2: B + T2", &[6.0, 1.0], 7.0, &[6.0 / 7.0, 1.0 / 7.0]),
        check_merge("Y2: residual + A2", &[7.0, 1.0], 8.0, &[]),
        check_merge("Y1: B split into two lanes", &[1.5, 1.5], 3.0, &[]),
        check_merge("Y1: B2 + B3", &[1.5, 1.5], 3.0, &[0.5, 0.5]),
        check_merge("Y1: B + T3", &[3.0, 1.0], 4.0, &[0.75, 0.25]),
        check_merge("Y1: R1 amplifier", &[4.0, 1.0], 5.0, &[]),
        check_merge("Y1: R2 amplifier", &[4.0, 1.0], 5.0, &[]),
        check_merge("Y1: R1 + R2", &[5.0, 5.0], 10.0, &[0.5, 0.5]),
        check_merge("Y1: NOT + XOR", &[1.0, 10.0], 11.0, &[w_not, w_xor]),
        check_merge("Y1: B1 + V", &[3.0, 1.0], 4.0, &[0.75, 0.25]),
        check_merge("Y1: NOT1 + NOT23", &[4.0, 11.0], 15.0, &[4.0 / 15.0, 11.0 / 15.0]),
        check_merge("Y1: mix + T4", &[15.0, 1.0], 16.0, &[15.0 / 16.0, 1.0 / 16.0]),
        check_merge("Y1: residual + A5", &[16.0, 1.0], 17.0, &[]),
    ]
}

/// Receiver channel lengths L1..L20 in micrometres.
pub const TABLE_LENGTHS_UM: [f64; 20] = [
    80.0, 20.0, 100.0, 500.0, 150.0, 200.0, 350.0, 400.0, 170.0, 180.0, 180.0, 200.0, 250.0, 500.0, 550.0, 1911.0, 50.0,
    300.0, 750.0, 800.0,
];

impl RxParams {
    /// Receiver parameters of the published design.
    pub fn reference(dispersion: DispersionParams) -> Self {
        Self {
            t1: [0.5, 1.5, 2.5],
            t2: 14.0,
            t3: 7.0,
            t4: 40.0,
            a: [9.0, 24.0, 20.0, 20.0, 51.0],
            not0: 22.0,
            v0: 28.0,
            lengths: TABLE_LENGTHS_UM.map(|l| l * UM),
            buffer: 50.0 * UM,
            width: 20.0 * UM,
            height: 10.0 * UM,
            dispersion,
            theta: crate::reactions::DEFAULT_THETA,
            decision_fraction: DECISION_FRACTION,
            not_weighting: NotWeighting::Flow,
        }
    }
}

impl TxParams {
    /// Transmitter parameters of the published design.
    pub fn reference(dispersion: DispersionParams, grid: TimeGrid) -> Self {
        Self {
            grid,
            symbol: PulseSpec::rect(12.0, 1.0, 3.0),
            p1: PulseSpec::rect(12.0, 1.0, 3.0),
            p2: PulseSpec::rect(12.0, 1.0, 3.0),
            m0: 12.0,
            thl0: 16.0,
            amp: [0.0, 8.0, 16.0, 24.0],
            buffers: [100.0 * UM, 150.0 * UM, 350.0 * UM, 400.0 * UM],
            transport: 80.0 * UM,
            combine: 20.0 * UM,
            reaction: 500.0 * UM,
            l_a2: 120.0 * UM,
            dispersion,
            theta: crate::reactions::DEFAULT_THETA,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dispersion() -> DispersionParams {
        DispersionParams::new(1e-8, 1e-8, 1e-3).unwrap()
    }

    fn rx() -> RxParams {
        RxParams::reference(dispersion())
    }

    fn received(level: f64) -> ConcentrationSignal {
        generate(&PulseSpec::rect(level, 1.0, 3.0), &TimeGrid::default()).unwrap()
    }

    #[test]
    fn level_bit_mapping() {
        for i in 0..4 {
            assert_eq!(level_of(bits_of(i)), i);
        }
        assert_eq!(bits_of(2), (true, false));
    }

    #[test]
    fn transmitter_levels() {
        let tx = TxParams::reference(dispersion(), TimeGrid::default());
        for (u, want) in [(1, 0.0), (2, 1.0), (3, 2.0), (4, 3.0)] {
            assert_relative_eq!(tx.expected_high(u), want);
        }
        assert!(tx.stages().multiplier_report().iter().all(|c| c.consistent));
        let mut bad = tx.clone();
        bad.amp = [0.0, 8.0, 8.0, 24.0];
        assert!(tx_modulate(&bad, (true, true)).is_err());
    }

    #[test]
    fn transmitter_selects_one_unit() {
        let tx = TxParams::reference(dispersion(), TimeGrid::default());
        let out = tx_modulate(&tx, (true, true)).unwrap();
        let peaks = out.peaks();
        assert!(peaks[3] > 0.9 * 3.0, "{peaks:?}");
        assert!(peaks[..3].iter().all(|p| *p < 0.05), "{peaks:?}");
        assert!(tx_one_hot(&tx, &out));
    }

    #[test]
    fn frontend_thresholds() {
        let r = rx();
        let zero = ConcentrationSignal::zeros(&TimeGrid::default());
        assert!(rx_frontend(&zero, &r).unwrap().iter().all(|b| b.max() == 0.0));
        let b = rx_frontend(&received(3.0), &r).unwrap();
        assert!(b.iter().all(|b| b.max() > 2.5), "{:?}", b.iter().map(|b| b.max()).collect::<Vec<_>>());
        let b = rx_frontend(&received(0.4), &r).unwrap();
        assert!(b.iter().all(|b| b.max() == 0.0));
    }

    #[test]
    fn second_bit_is_b2_and_b1() {
        let r = rx();
        for (level, want) in [(0.0, false), (1.0, false), (2.0, true), (3.0, true)] {
            let [b1, b2, _] = rx_frontend(&received(level), &r).unwrap();
            let y2 = rx_y2(&b1, &b2, &r).unwrap();
            assert_eq!(y2.max() > 0.5 * r.expected_y2(), want, "level {level}: {}", y2.max());
        }
    }

    #[test]
    fn y1_window_excludes_the_table_value() {
        let r = rx();
        let (lo, hi) = y1_threshold_window(&r).unwrap();
        assert_relative_eq!(lo, 22.0, max_relative = 1e-9);
        assert_relative_eq!(hi, 31.0, max_relative = 1e-9);
        assert!(!(lo..hi).contains(&r.t4));
        let literal = RxParams { not_weighting: NotWeighting::Literal, ..r };
        let (lo, hi) = y1_threshold_window(&literal).unwrap();
        assert_relative_eq!(lo, 227.0, max_relative = 1e-9);
        assert_relative_eq!(hi, 229.0, max_relative = 1e-9);
    }

    #[test]
    fn y1_with_a_feasible_threshold() {
        let r = RxParams { t4: 26.5, ..rx() };
        for level in 0..4 {
            let out = rx_demodulate(&received(level as f64), &r).unwrap();
            assert_eq!(out.bits, bits_of(level), "level {level}: y1 peak {}", out.y1.y1.max());
        }
    }

    #[test]
    fn not_streams_arrive_together() {
        let r = rx();
        let (a, b) = merge_arrivals(&r);
        assert!((a - b).abs() < 5e-3, "{a} vs {b}");
        assert!(check_alignment(&r, 0.005, 4001).is_ok());
        let mut skew = r.clone();
        skew.lengths[15] = 3000.0 * UM;
        assert!(matches!(check_alignment(&skew, 0.005, 4001), Err(Error::Alignment { .. })));
    }

    #[test]
    fn hydraulic_report_flags_literal_not_weights() {
        let flow = rx_multiplier_report(&rx());
        assert!(flow.iter().all(|c| c.consistent));
        let literal = rx_multiplier_report(&RxParams { not_weighting: NotWeighting::Literal, ..rx() });
        let bad: Vec<_> = literal.iter().filter(|c| !c.consistent).map(|c| c.label.as_str()).collect();
        assert_eq!(bad, vec!["Y1: NOT + XOR"]);
    }

    #[test]
    fn zero_signals_decode_to_zero() {
        let zero = ConcentrationSignal::zeros(&TimeGrid::default());
        assert_eq!(demodulate(&zero, &zero, &rx()), (false, false));
    }
}
