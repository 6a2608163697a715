//! Built-in scenarios: configuration schema, published defaults and the
//! runners behind the command-line tool.
//!
//! Lengths are given in micrometres (`*_um` keys), concentrations in
//! mol/m³, velocities in m/s, diffusivities in m²/s and times in s.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::{and_gate, and_truth_table, thl_at_junction, thl_window, AndGateParams};
use crate::error::{Error, Result};
use crate::hydraulics::ChannelGeometry;
use crate::operators::{BlockGeometry, Blocks};
use crate::oracle::{compare, fd_convection_diffusion, fd_reaction, FdConfig};
use crate::qcsk::{
    bits_of, end_to_end, level_of, rx_demodulate, rx_multiplier_report, tx_modulate, tx_one_hot, y1_threshold_window, Bits,
    NotWeighting, RxParams, TxParams, TABLE_LENGTHS_UM,
};
use crate::reactions::{thresholding_channel, RateConstant, DEFAULT_THETA};
use crate::signal::{generate, ConcentrationSignal, PulseSpec, TimeGrid};
use crate::transfer::{apply_channel, kernel, DispersionParams};
use crate::UM;

pub const SCENARIOS: [&str; 5] = ["and-gate", "qcsk-tx", "qcsk-rx", "link", "validate"];

pub fn list_scenarios() -> Vec<&'static str> {
    SCENARIOS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t0: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl GridConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_horizon(self.t0, self.dt, self.horizon)
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t0: 0.0, dt: 0.005, horizon: 20.0 }
    }
}

/// Carrier flow and channel cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub v_eff: f64,
    pub d_eff: f64,
    pub width_um: f64,
    pub height_um: f64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self { v_eff: 1e-3, d_eff: 1e-8, width_um: 20.0, height_um: 10.0 }
    }
}

impl FluidConfig {
    pub fn dispersion(&self) -> Result<DispersionParams> {
        let section = ChannelGeometry::new(self.width_um * UM, self.height_um * UM, 1.0)?;
        DispersionParams::from_effective(self.d_eff, self.v_eff, &section)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AndGateConfig {
    pub i1: PulseSpec,
    pub i2: PulseSpec,
    pub m0: f64,
    pub thl0: f64,
    pub amp0: f64,
    pub l_t_um: f64,
    pub l_c_um: f64,
    pub l_b_um: f64,
    pub l_r_um: f64,
    pub l_a2_um: f64,
    pub fluid: FluidConfig,
    pub theta: f64,
}

impl Default for AndGateConfig {
    fn default() -> Self {
        Self {
            i1: PulseSpec::rect(8.0, 1.0, 3.0),
            i2: PulseSpec::rect(8.0, 2.0, 4.0),
            m0: 8.0,
            thl0: 10.0,
            amp0: 12.0,
            l_t_um: 80.0,
            l_c_um: 20.0,
            l_b_um: 50.0,
            l_r_um: 500.0,
            l_a2_um: 120.0,
            fluid: FluidConfig::default(),
            theta: DEFAULT_THETA,
        }
    }
}

impl AndGateConfig {
    pub fn params(&self, grid: &TimeGrid) -> Result<AndGateParams> {
        let p = AndGateParams {
            i1: generate(&self.i1, grid)?,
            i2: generate(&self.i2, grid)?,
            m0: self.m0,
            thl0: self.thl0,
            amp0: self.amp0,
            geometry: BlockGeometry::new(self.l_t_um * UM, self.l_c_um * UM, self.l_b_um * UM, self.l_r_um * UM)?,
            l_a2: self.l_a2_um * UM,
            blocks: Blocks::with_theta(self.fluid.dispersion()?, self.theta)?,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxConfig {
    /// Waveform of a HIGH bit.
    pub symbol: PulseSpec,
    pub p1: PulseSpec,
    pub p2: PulseSpec,
    pub m0: f64,
    pub thl0: f64,
    /// Amplifier supply of units 1..4.
    pub amp: [f64; 4],
    /// L_B1..L_B4.
    pub buffers_um: [f64; 4],
    pub l_t_um: f64,
    pub l_c_um: f64,
    pub l_r_um: f64,
    pub l_a2_um: f64,
    pub fluid: FluidConfig,
    pub theta: f64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol: PulseSpec::rect(12.0, 1.0, 3.0),
            p1: PulseSpec::rect(12.0, 1.0, 3.0),
            p2: PulseSpec::rect(12.0, 1.0, 3.0),
            m0: 12.0,
            thl0: 16.0,
            amp: [0.0, 8.0, 16.0, 24.0],
            buffers_um: [100.0, 150.0, 350.0, 400.0],
            l_t_um: 80.0,
            l_c_um: 20.0,
            l_r_um: 500.0,
            l_a2_um: 120.0,
            fluid: FluidConfig::default(),
            theta: DEFAULT_THETA,
        }
    }
}

impl TxConfig {
    pub fn params(&self, grid: &TimeGrid) -> Result<TxParams> {
        let p = TxParams {
            grid: *grid,
            symbol: self.symbol,
            p1: self.p1,
            p2: self.p2,
            m0: self.m0,
            thl0: self.thl0,
            amp: self.amp,
            buffers: self.buffers_um.map(|b| b * UM),
            transport: self.l_t_um * UM,
            combine: self.l_c_um * UM,
            reaction: self.l_r_um * UM,
            l_a2: self.l_a2_um * UM,
            dispersion: self.fluid.dispersion()?,
            theta: self.theta,
        };
        p.validate()?;
        Ok(p)
    }
}

const RX_SPECIES: [&str; 10] = ["A1", "A2", "A3", "A4", "A5", "T2", "T3", "T4", "NOT", "V"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxConfig {
    /// Detection thresholds T1 of units 1..3.
    pub thresholds: [f64; 3],
    /// Constant injections keyed by species: A1..A5, T2..T4, NOT, V.
    pub injections: IndexMap<String, f64>,
    /// Channel lengths keyed L1..L20.
    pub lengths_um: IndexMap<String, f64>,
    pub buffer_um: f64,
    pub fluid: FluidConfig,
    pub theta: f64,
    pub decision_fraction: f64,
    pub not_weighting: NotWeighting,
}

impl Default for RxConfig {
    fn default() -> Self {
        let p = RxParams::reference(FluidConfig::default().dispersion().expect("default fluid is valid"));
        let values = [p.a[0], p.a[1], p.a[2], p.a[3], p.a[4], p.t2, p.t3, p.t4, p.not0, p.v0];
        Self {
            thresholds: p.t1,
            injections: RX_SPECIES.iter().zip(values).map(|(k, v)| (k.to_string(), v)).collect(),
            lengths_um: TABLE_LENGTHS_UM.iter().enumerate().map(|(i, l)| (format!("L{}", i + 1), *l)).collect(),
            buffer_um: 50.0,
            fluid: FluidConfig::default(),
            theta: p.theta,
            decision_fraction: p.decision_fraction,
            not_weighting: p.not_weighting,
        }
    }
}

impl RxConfig {
    pub fn params(&self) -> Result<RxParams> {
        let get = |k: &str| {
            self.injections.get(k).copied().ok_or_else(|| Error::Config(format!("receiver injection {k} is not defined")))
        };
        for k in self.injections.keys() {
            if !RX_SPECIES.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown receiver species {k}")));
            }
        }
        let mut lengths = [0.0; 20];
        for (i, l) in lengths.iter_mut().enumerate() {
            let key = format!("L{}", i + 1);
            *l = self.lengths_um.get(&key).ok_or_else(|| Error::Config(format!("channel length {key} is not defined")))? * UM;
        }
        if self.lengths_um.len() != 20 {
            return Err(Error::Config("lengths_um must hold exactly L1..L20".into()));
        }
        let p = RxParams {
            t1: self.thresholds,
            t2: get("T2")?,
            t3: get("T3")?,
            t4: get("T4")?,
            a: [get("A1")?, get("A2")?, get("A3")?, get("A4")?, get("A5")?],
            not0: get("NOT")?,
            v0: get("V")?,
            lengths,
            buffer: self.buffer_um * UM,
            width: self.fluid.width_um * UM,
            height: self.fluid.height_um * UM,
            dispersion: self.fluid.dispersion()?,
            theta: self.theta,
            decision_fraction: self.decision_fraction,
            not_weighting: self.not_weighting,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcskRxConfig {
    pub rx: RxConfig,
    /// Unit-amplitude received waveform; level i is sent as i times it.
    pub input: PulseSpec,
    pub levels: Vec<usize>,
}

impl Default for QcskRxConfig {
    fn default() -> Self {
        Self { rx: RxConfig::default(), input: PulseSpec::rect(1.0, 1.0, 3.0), levels: vec![0, 1, 2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcskTxConfig {
    pub tx: TxConfig,
    /// Bit pairs written `b2b1`.
    pub bits: Vec<String>,
}

impl Default for QcskTxConfig {
    fn default() -> Self {
        Self { tx: TxConfig::default(), bits: all_bit_pairs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub tx: TxConfig,
    pub rx: RxConfig,
    pub bits: Vec<String>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { tx: TxConfig::default(), rx: RxConfig::default(), bits: all_bit_pairs() }
    }
}

fn all_bit_pairs() -> Vec<String> {
    ["00", "01", "10", "11"].map(String::from).to_vec()
}

/// Parses `b2b1`, e.g. "10" → (true, false).
pub fn parse_bits(s: &str) -> Result<Bits> {
    match s {
        "00" => Ok((false, false)),
        "01" => Ok((false, true)),
        "10" => Ok((true, false)),
        "11" => Ok((true, true)),
        _ => Err(Error::Config(format!("bit pair must be one of 00, 01, 10, 11, got {s:?}"))),
    }
}

pub fn format_bits(b: Bits) -> String {
    format!("{}{}", b.0 as u8, b.1 as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValidateConfig {
    /// Analytical channel against the finite-difference solver.
    CdChannel {
        length_um: f64,
        input: PulseSpec,
        fluid: FluidConfig,
        cells: usize,
        tolerance: f64,
    },
    /// Infinite-rate thresholding channel against finite-k FD.
    Reaction {
        length_um: f64,
        ci: PulseSpec,
        cj: PulseSpec,
        k: f64,
        fluid: FluidConfig,
        cells: usize,
        tolerance: f64,
    },
    /// Mass and mean of kernels for random (x, v, D_eff).
    Kernel {
        cases: usize,
        x_um: [f64; 2],
        v_eff: [f64; 2],
        d_eff: [f64; 2],
        dt: f64,
    },
}

impl ValidateConfig {
    pub const CASES: [&'static str; 3] = ["cd-channel", "reaction", "kernel"];

    pub fn default_for(case: &str) -> Result<Self> {
        match case {
            "cd-channel" => Ok(Self::CdChannel {
                length_um: 500.0,
                input: PulseSpec::rect(8.0, 1.0, 3.0),
                fluid: FluidConfig::default(),
                cells: 500,
                tolerance: 0.05,
            }),
            "reaction" => Ok(Self::Reaction {
                length_um: 500.0,
                ci: PulseSpec::Gaussian { amplitude: 3.0 / (0.5 * std::f64::consts::PI).sqrt(), centre: 2.0, width: 0.5 },
                cj: PulseSpec::constant(1.3),
                k: 400.0,
                fluid: FluidConfig { v_eff: 2e-3, ..FluidConfig::default() },
                cells: 250,
                tolerance: 0.08,
            }),
            "kernel" => Ok(Self::Kernel { cases: 20, x_um: [100.0, 1000.0], v_eff: [5e-4, 5e-3], d_eff: [5e-9, 2e-8], dt: 1e-3 }),
            _ => Err(Error::Config(format!("unknown validation case {case:?}; expected one of {:?}", Self::CASES))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::CdChannel { .. } => "cd-channel",
            Self::Reaction { .. } => "reaction",
            Self::Kernel { .. } => "kernel",
        }
    }
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self::default_for("cd-channel").expect("built-in case")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", content = "params", rename_all = "kebab-case")]
pub enum Scenario {
    AndGate(AndGateConfig),
    QcskTx(QcskTxConfig),
    QcskRx(QcskRxConfig),
    Link(LinkConfig),
    Validate(ValidateConfig),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::AndGate(_) => "and-gate",
            Scenario::QcskTx(_) => "qcsk-tx",
            Scenario::QcskRx(_) => "qcsk-rx",
            Scenario::Link(_) => "link",
            Scenario::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub scenario: Scenario,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Published parameter set of a built-in scenario.
pub fn dump_defaults(name: &str) -> Result<ScenarioConfig> {
    let scenario = match name {
        "and-gate" => Scenario::AndGate(AndGateConfig::default()),
        "qcsk-tx" => Scenario::QcskTx(QcskTxConfig::default()),
        "qcsk-rx" => Scenario::QcskRx(QcskRxConfig::default()),
        "link" => Scenario::Link(LinkConfig::default()),
        "validate" => Scenario::Validate(ValidateConfig::default()),
        _ => return Err(Error::Config(format!("unknown scenario {name:?}; expected one of {SCENARIOS:?}"))),
    };
    Ok(ScenarioConfig { scenario, grid: GridConfig::default(), seed: 0, output_dir: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), detail: detail.into(), pass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: &'static str,
    pub signals: Vec<(String, ConcentrationSignal)>,
    pub checks: Vec<Check>,
    /// Key figures of the run, in order.
    pub summary: Vec<(String, String)>,
}

impl RunReport {
    fn new(scenario: &'static str) -> Self {
        Self { scenario, signals: Vec::new(), checks: Vec::new(), summary: Vec::new() }
    }

    fn signal(&mut self, name: impl Into<String>, s: ConcentrationSignal) {
        self.signals.push((name.into(), s));
    }

    fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn run(config: &ScenarioConfig) -> Result<RunReport> {
    let grid = config.grid.grid()?;
    match &config.scenario {
        Scenario::AndGate(c) => run_and_gate(c, &grid),
        Scenario::QcskTx(c) => run_tx(c, &grid),
        Scenario::QcskRx(c) => run_rx(c, &grid),
        Scenario::Link(c) => run_link(c, &grid),
        Scenario::Validate(c) => run_validate(c, &grid, config.seed),
    }
}

fn run_and_gate(c: &AndGateConfig, grid: &TimeGrid) -> Result<RunReport> {
    let p = c.params(grid)?;
    let mut r = RunReport::new("and-gate");
    let trace = and_gate(&p)?;
    let table = and_truth_table(&p)?;
    let window = thl_window(&p)?;
    let at_junction = thl_at_junction(&p)?;

    r.note("expected HIGH level", table.expected_high);
    r.note("ThL window", format!("({:.4}, {:.4})", window.lower, window.upper));
    r.note("C1 at threshold junction", window.c1);
    for row in &table.rows {
        r.note(format!("peak for inputs {}", format_bits(row.inputs)), format!("{:.6}", row.peak));
    }
    r.checks.push(Check::new(
        format!("AND truth table at ThL = {}", c.thl0),
        table.is_and(),
        format!("HIGH rows: {:?}", table.rows.iter().filter(|r| r.high).map(|r| format_bits(r.inputs)).collect::<Vec<_>>()),
    ));
    r.checks.push(Check::new(
        format!("ThL window contains {}", c.thl0),
        window.contains(c.thl0),
        format!("({:.4}, {:.4})", window.lower, window.upper),
    ));
    let expect = c.thl0 / 5.0;
    let rel = if expect > 0.0 { (at_junction / expect - 1.0).abs() } else { at_junction.abs() };
    r.checks.push(Check::new("ThL diluted to one fifth", rel <= 0.03, format!("{at_junction:.6} vs {expect:.6} ({:.3}%)", 100.0 * rel)));

    r.signal("I1", p.i1.clone());
    r.signal("I2", p.i2.clone());
    r.signal("N", trace.merged);
    r.signal("threshold_input", trace.threshold_input);
    r.signal("O", trace.output);
    Ok(r)
}

fn run_tx(c: &QcskTxConfig, grid: &TimeGrid) -> Result<RunReport> {
    let p = c.tx.params(grid)?;
    let mut r = RunReport::new("qcsk-tx");
    let mut selected = BTreeMap::new();
    for s in &c.bits {
        let bits = parse_bits(s)?;
        let out = tx_modulate(&p, bits)?;
        let peaks = out.peaks();
        r.note(format!("unit peaks for {s}"), format!("{peaks:.6?}"));
        r.checks.push(Check::new(format!("one-hot output for {s}"), tx_one_hot(&p, &out), format!("selected unit {}", level_of(bits) + 1)));
        selected.insert(level_of(bits), peaks[level_of(bits)]);
        for (k, u) in out.units.into_iter().enumerate() {
            r.signal(format!("O{}_{s}", k + 1), u.output);
        }
    }
    if selected.len() == 4 {
        let v: Vec<f64> = selected.values().copied().collect();
        r.checks.push(Check::new("peaks ordered 4 > 3 > 2 > 1", v.windows(2).all(|w| w[1] > w[0]), format!("{v:.6?}")));
    }
    let junctions = p.stages().multiplier_report();
    r.checks.push(Check::new("junction multipliers conserve flow", junctions.iter().all(|j| j.consistent), format!("{} junctions", junctions.len())));
    Ok(r)
}

fn run_rx(c: &QcskRxConfig, grid: &TimeGrid) -> Result<RunReport> {
    let p = c.rx.params()?;
    let mut r = RunReport::new("qcsk-rx");
    match y1_threshold_window(&p) {
        Some((lo, hi)) => r.note("feasible T4 range", format!("({lo:.4}, {hi:.4}), configured {}", p.t4)),
        None => r.note("feasible T4 range", format!("empty, configured {}", p.t4)),
    }
    for level in &c.levels {
        if *level > 3 {
            return Err(Error::Config(format!("levels must lie in 0..=3, got {level}")));
        }
        let input = generate(&c.input.with_amplitude(c.input.amplitude() * *level as f64), grid)?;
        let out = rx_demodulate(&input, &p)?;
        let want = bits_of(*level);
        r.note(format!("level {level} peaks (Y2, Y1)"), format!("({:.6}, {:.6})", out.y2.max(), out.y1.y1.max()));
        r.checks.push(Check::new(
            format!("level {level} decodes to {}", format_bits(want)),
            out.bits == want,
            format!("decoded {}", format_bits(out.bits)),
        ));
        r.signal(format!("C_O_{level}"), input);
        for (i, b) in out.b.into_iter().enumerate() {
            r.signal(format!("B{}_{level}", i + 1), b);
        }
        r.signal(format!("Y2_{level}"), out.y2);
        r.signal(format!("NOT1_{level}"), out.y1.not1);
        r.signal(format!("NOT23_{level}"), out.y1.not23);
        r.signal(format!("Y1_{level}"), out.y1.y1);
    }
    let report = rx_multiplier_report(&p);
    let bad: Vec<_> = report.iter().filter(|j| !j.consistent).map(|j| j.label.clone()).collect();
    r.checks.push(Check::new("junction multipliers conserve flow", bad.is_empty(), if bad.is_empty() { "all consistent".into() } else { bad.join("; ") }));
    Ok(r)
}

fn run_link(c: &LinkConfig, grid: &TimeGrid) -> Result<RunReport> {
    let tx = c.tx.params(grid)?;
    let rx = c.rx.params()?;
    let mut r = RunReport::new("link");
    for s in &c.bits {
        let bits = parse_bits(s)?;
        let (decoded, sent, received) = end_to_end(bits, &tx, &rx)?;
        r.note(format!("{s} received peak"), format!("{:.6}", sent.selected().max()));
        r.checks.push(Check::new(format!("{s} → {s}"), decoded == bits, format!("decoded {}", format_bits(decoded))));
        r.signal(format!("C_O_{s}"), sent.selected().clone());
        r.signal(format!("Y2_{s}"), received.y2);
        r.signal(format!("Y1_{s}"), received.y1.y1);
    }
    Ok(r)
}

fn run_validate(c: &ValidateConfig, grid: &TimeGrid, seed: u64) -> Result<RunReport> {
    let mut r = RunReport::new("validate");
    r.note("case", c.name());
    match c {
        ValidateConfig::CdChannel { length_um, input, fluid, cells, tolerance } => {
            let p = fluid.dispersion()?;
            let len = length_um * UM;
            let input = generate(input, grid)?;
            let analytical = apply_channel(&input, len, &p)?;
            let fd = fd_convection_diffusion(&input, len, &p, &FdConfig::for_channel(len, &p, grid.dt, *cells, 0.0)?)?;
            let e = compare(&analytical, &fd);
            r.note("relative L2 error", e.relative_l2);
            r.note("delay mismatch (s)", e.delay);
            r.checks.push(Check::new(
                "analytical vs FD, peak-normalized max error",
                e.peak_normalized_max <= *tolerance,
                format!("{:.4}% (limit {}%)", 100.0 * e.peak_normalized_max, 100.0 * tolerance),
            ));
            r.signal("input", input);
            r.signal("analytical", analytical);
            r.signal("oracle", fd);
        }
        ValidateConfig::Reaction { length_um, ci, cj, k, fluid, cells, tolerance } => {
            let p = fluid.dispersion()?;
            let len = length_um * UM;
            let (ci, cj) = (generate(ci, grid)?, generate(cj, grid)?);
            let (ai, aj, ak) = thresholding_channel(&ci, &cj, len, &p)?;
            let cfg = FdConfig::for_channel(len, &p, grid.dt, *cells, k * ci.max().max(cj.max()))?;
            let (fi, fj, fk) = fd_reaction(&ci, &cj, len, &p, RateConstant::finite(*k)?, &cfg)?;
            for (name, a, f) in [("S_i", &ai, &fi), ("S_j", &aj, &fj), ("S_k", &ak, &fk)] {
                let e = compare(a, f);
                r.checks.push(Check::new(
                    format!("{name}: k = ∞ vs FD at k = {k}"),
                    e.peak_normalized_max <= *tolerance,
                    format!("{:.4}% (limit {}%)", 100.0 * e.peak_normalized_max, 100.0 * tolerance),
                ));
            }
            for (name, s) in [("Si0", ci), ("Sj0", cj), ("Si_analytical", ai), ("Sj_analytical", aj), ("Sk_analytical", ak)] {
                r.signal(name, s);
            }
            for (name, s) in [("Si_oracle", fi), ("Sj_oracle", fj), ("Sk_oracle", fk)] {
                r.signal(name, s);
            }
        }
        ValidateConfig::Kernel { cases, x_um, v_eff, d_eff, dt } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..*cases {
                let x = rng.random_range(x_um[0]..=x_um[1]) * UM;
                let v = rng.random_range(v_eff[0]..=v_eff[1]);
                let d = rng.random_range(d_eff[0]..=d_eff[1]);
                let p = DispersionParams::new(d, d, v)?;
                let h = kernel(x, &p, *dt, usize::MAX)?;
                let mass_ok = (h.mass() - 1.0).abs() <= 1e-3 && (h.raw_mass - 1.0).abs() <= 1e-2;
                let mean_err = (h.mean() / (x / v) - 1.0).abs();
                r.checks.push(Check::new(
                    format!("kernel {i}: x = {:.1} µm, v = {v:.3e}, D = {d:.3e}", x / UM),
                    mass_ok && mean_err <= 0.02,
                    format!("mass {:.6}, raw {:.6}, mean error {:.3}%", h.mass(), h.raw_mass, 100.0 * mean_err),
                ));
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_builtins() {
        assert_eq!(list_scenarios(), vec!["and-gate", "qcsk-tx", "qcsk-rx", "link", "validate"]);
        assert!(dump_defaults("nope").is_err());
    }

    #[test]
    fn defaults_carry_the_published_values() {
        let Scenario::QcskRx(rx) = dump_defaults("qcsk-rx").unwrap().scenario else { panic!() };
        assert_eq!(rx.rx.injections["A1"], 9.0);
        assert_eq!(rx.rx.injections["T4"], 40.0);
        assert_eq!(rx.rx.lengths_um["L16"], 1911.0);
        let Scenario::AndGate(g) = dump_defaults("and-gate").unwrap().scenario else { panic!() };
        assert_eq!(g.l_r_um, 500.0);
    }

    #[test]
    fn rx_config_round_trips_to_reference_params() {
        let p = RxConfig::default().params().unwrap();
        let want = RxParams::reference(FluidConfig::default().dispersion().unwrap());
        assert_eq!(p.a, want.a);
        assert_eq!((p.t2, p.t3, p.t4, p.not0, p.v0), (want.t2, want.t3, want.t4, want.not0, want.v0));
        for (a, b) in p.lengths.iter().zip(want.lengths) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn missing_species_is_a_config_error() {
        let mut c = RxConfig::default();
        c.injections.shift_remove("V");
        assert!(matches!(c.params(), Err(Error::Config(m)) if m.contains("V")));
        let mut c = RxConfig::default();
        c.injections.insert("A9".into(), 1.0);
        assert!(c.params().is_err());
    }

    #[test]
    fn bit_strings() {
        for s in ["00", "01", "10", "11"] {
            assert_eq!(format_bits(parse_bits(s).unwrap()), s);
        }
        assert_eq!(parse_bits("01").unwrap(), (false, true));
        assert!(parse_bits("2").is_err());
    }

    #[test]
    fn kernel_validation_is_seeded() {
        let cfg = ScenarioConfig {
            scenario: Scenario::Validate(ValidateConfig::Kernel { cases: 3, x_um: [100.0, 1000.0], v_eff: [5e-4, 5e-3], d_eff: [5e-9, 2e-8], dt: 1e-3 }),
            grid: GridConfig::default(),
            seed: 7,
            output_dir: None,
        };
        let a = run(&cfg).unwrap();
        assert_eq!(a.checks.len(), 3);
        assert!(a.passed(), "{:?}", a.checks);
        assert_eq!(a.checks, run(&cfg).unwrap().checks);
    }
}
