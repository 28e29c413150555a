//! Column charge integration and threshold detection.
//!
//! Each output line is precharged to `V_RESET` and discharged by the sources
//! whose gates are high; the latch fires when the line falls to its
//! threshold. [`simulate_column_ideal`] handles constant currents in closed
//! form, [`simulate_column_nonideal`] integrates drain-voltage-dependent
//! currents with an adaptive Runge-Kutta scheme.

mod ideal;
mod nonideal;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ideal::simulate_column_ideal;
pub use nonideal::{simulate_column_nonideal, DEFAULT_TOLERANCE};

use crate::compiler::{ChargeBudget, CurrentSourceArray, InputWires, Polarity, QuadArray};
use crate::error::{ColumnFailure, Error, Result};
use crate::signal::{ClockConfig, DifferentialSignal, TimeSignal};

/// Default thermal voltage `kT/q` at room temperature, V.
pub const DEFAULT_V_THERMAL: f64 = 0.026;
/// Default drain capacitance per cell, F.
pub const DEFAULT_C_DRAIN: f64 = 0.2e-15;
/// Default external capacitance per summed input (`≈ 200 C_drain`), F.
pub const DEFAULT_C_PER_INPUT: f64 = 0.04e-12;

/// Electrical operating point of a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub clock: ClockConfig,
    /// Total column capacitance `C`, F.
    pub capacitance: f64,
    /// Precharge voltage of the drain line, V.
    pub v_reset: f64,
    /// Latch switching threshold, V.
    pub v_th_latch: f64,
    pub v_thermal: f64,
    pub c_drain_per_cell: f64,
    /// Constant charge already removed from the line when the window opens
    /// (injection, leakage, coupling), C.
    pub charge_offset: f64,
}

impl CircuitParams {
    pub fn new(clock: ClockConfig, capacitance: f64, v_reset: f64, v_th_latch: f64) -> Result<Self> {
        Self {
            clock,
            capacitance,
            v_reset,
            v_th_latch,
            v_thermal: DEFAULT_V_THERMAL,
            c_drain_per_cell: DEFAULT_C_DRAIN,
            charge_offset: 0.0,
        }
        .validated()
    }

    /// Column capacitance scaled with the number of summed inputs.
    pub fn for_inputs(clock: ClockConfig, inputs: usize, c_per_input: f64, v_reset: f64, v_th_latch: f64) -> Result<Self> {
        Self::new(clock, inputs as f64 * c_per_input, v_reset, v_th_latch)
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.capacitance.is_finite() && self.capacitance > 0.0) {
            return Err(Error::Domain(format!("column capacitance must be positive, got {}", self.capacitance)));
        }
        if !(self.v_th_latch > 0.0 && self.v_reset > self.v_th_latch && self.v_reset.is_finite()) {
            return Err(Error::Domain(format!(
                "need V_RESET > V_TH > 0, got V_RESET = {} V, V_TH = {} V",
                self.v_reset, self.v_th_latch
            )));
        }
        if !(self.v_thermal.is_finite() && self.v_thermal > 0.0) {
            return Err(Error::Domain(format!("thermal voltage must be positive, got {}", self.v_thermal)));
        }
        if !(self.c_drain_per_cell.is_finite() && self.c_drain_per_cell >= 0.0) {
            return Err(Error::Domain("drain capacitance per cell must be nonnegative".into()));
        }
        if !self.charge_offset.is_finite() {
            return Err(Error::Domain("charge offset must be finite".into()));
        }
        Ok(self)
    }

    /// Drain swing `ΔV_D = V_RESET - V_TH`.
    pub fn delta_vd(&self) -> f64 {
        self.v_reset - self.v_th_latch
    }

    pub fn window(&self) -> f64 {
        self.clock.window()
    }

    pub fn budget(&self) -> ChargeBudget {
        ChargeBudget { capacitance: self.capacitance, swing: self.delta_vd(), window: self.window() }
    }

    /// Charge the sources must sink before the latch fires.
    pub fn required_charge(&self) -> f64 {
        self.capacitance * self.delta_vd() - self.charge_offset
    }
}

/// Current law of the programmable sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeviceModel {
    /// Constant current while the gate is high.
    Ideal,
    /// `I(V_D) = I_prog (1 - exp(-V_D / V_T)) exp(λ (V_D - V_ref))`.
    SubthresholdDibl { lambda: f64, v_ref: f64 },
}

impl DeviceModel {
    pub fn dibl(lambda: f64, v_ref: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Domain(format!("DIBL coefficient must be >= 0, got {lambda}")));
        }
        if !v_ref.is_finite() {
            return Err(Error::Domain("reference drain voltage must be finite".into()));
        }
        Ok(DeviceModel::SubthresholdDibl { lambda, v_ref })
    }

    /// `I(V_D) / I_prog`.
    pub fn current_factor(&self, v_drain: f64, v_thermal: f64) -> f64 {
        match *self {
            DeviceModel::Ideal => 1.0,
            DeviceModel::SubthresholdDibl { lambda, v_ref } => {
                -(-v_drain / v_thermal).exp_m1() * (lambda * (v_drain - v_ref)).exp()
            }
        }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, DeviceModel::Ideal)
    }
}

/// A programmed source and the local intervals during which its gate is high.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedSource {
    pub current: f64,
    pub on: Vec<(f64, f64)>,
}

/// Everything that discharges one column during a window. Times are local to
/// `origin`; the bias is on for the whole window.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDrive {
    pub origin: f64,
    pub sources: Vec<GatedSource>,
    pub bias: f64,
}

impl ColumnDrive {
    /// Gates each current with the matching wire, clipped to `[0, 2T]` of the
    /// window starting at `origin`.
    pub fn from_signals(origin: f64, currents: &[f64], gates: &[&TimeSignal], bias: f64, window: f64) -> Result<Self> {
        if currents.len() != gates.len() {
            return Err(Error::Dimension(format!(
                "{} currents for {} input wires",
                currents.len(),
                gates.len()
            )));
        }
        let end = 2.0 * window;
        let sources = currents
            .iter()
            .zip(gates)
            .map(|(&current, gate)| {
                let local = gate.rebased(origin);
                let on = local
                    .local_pulses()
                    .iter()
                    .map(|p| (p.rise.max(0.0), p.fall.min(end)))
                    .filter(|(a, b)| b > a)
                    .collect();
                GatedSource { current, on }
            })
            .collect();
        Ok(Self { origin, sources, bias })
    }

    /// Source and bias currents multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            origin: self.origin,
            sources: self
                .sources
                .iter()
                .map(|s| GatedSource { current: s.current * scale, on: s.on.clone() })
                .collect(),
            bias: self.bias * scale,
        }
    }

    /// Sorted distinct times at which the set of active sources changes,
    /// always including `0` and `2T`.
    pub(crate) fn breakpoints(&self, window: f64) -> Vec<f64> {
        let mut times: Vec<f64> = vec![0.0, 2.0 * window];
        for s in &self.sources {
            for &(a, b) in &s.on {
                times.push(a);
                times.push(b);
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// Total programmed current of sources on throughout `[a, b)`.
    pub(crate) fn active_current(&self, a: f64, b: f64) -> f64 {
        let mut total = self.bias;
        for s in &self.sources {
            if s.on.iter().any(|&(on, off)| on <= a && off >= b) {
                total += s.current;
            }
        }
        total
    }
}

/// Voltage history and crossing of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTrace {
    pub origin: f64,
    /// `(local time, V_D)` samples, nonincreasing in `V_D`.
    pub samples: Vec<(f64, f64)>,
    /// Local time of the first instant with `V_D <= V_TH`.
    pub crossing_time: f64,
    /// Charge sunk from the line by the crossing.
    pub charge: f64,
    /// True when the column never crossed and the crossing was pinned to
    /// the window end.
    pub saturated: bool,
}

impl ColumnTrace {
    pub fn absolute_crossing(&self) -> f64 {
        self.origin + self.crossing_time
    }
}

/// Per-column deviation from the nominal circuit: a latch threshold offset
/// and a multiplicative trim applied to every source of the column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnVariation {
    pub latch_offset: f64,
    pub current_scale: f64,
}

impl Default for ColumnVariation {
    fn default() -> Self {
        Self { latch_offset: 0.0, current_scale: 1.0 }
    }
}

/// Engine selection and run options for [`run_vmm`].
#[derive(Debug, Clone, PartialEq)]
pub struct VmmOptions {
    pub model: DeviceModel,
    /// Local tolerance of the non-ideal integrator.
    pub tolerance: f64,
    /// Pin late columns to the window end (zero code) and early ones to `T`
    /// instead of failing.
    pub saturate: bool,
    pub variations: Option<Vec<ColumnVariation>>,
}

impl VmmOptions {
    pub fn ideal() -> Self {
        Self { model: DeviceModel::Ideal, tolerance: DEFAULT_TOLERANCE, saturate: false, variations: None }
    }

    pub fn with_model(model: DeviceModel) -> Self {
        Self { model, ..Self::ideal() }
    }
}

impl Default for VmmOptions {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Output wires of a VMM run, in rising-edge form, with the column traces.
#[derive(Debug, Clone, PartialEq)]
pub struct VmmRun {
    pub outputs: Vec<TimeSignal>,
    pub traces: Vec<ColumnTrace>,
}

/// Differential outputs of a four-quadrant run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRun {
    pub outputs: Vec<DifferentialSignal>,
    pub plus: Vec<ColumnTrace>,
    pub minus: Vec<ColumnTrace>,
}

/// Simulates one column with the engine matching `model`.
pub fn simulate_column(drive: &ColumnDrive, params: &CircuitParams, model: &DeviceModel, tolerance: f64) -> Result<ColumnTrace> {
    match model {
        DeviceModel::Ideal => simulate_column_ideal(drive, params),
        _ => simulate_column_nonideal(drive, params, model, tolerance),
    }
}

/// Runs every column of a single-quadrant array. Each output rises at its
/// crossing and falls at `3T`.
pub fn run_vmm(inputs: &[TimeSignal], array: &CurrentSourceArray, params: &CircuitParams, options: &VmmOptions) -> Result<VmmRun> {
    if inputs.len() != array.rows() {
        return Err(Error::Dimension(format!(
            "{} input wires for an array with {} rows",
            inputs.len(),
            array.rows()
        )));
    }
    if let Some(v) = &options.variations {
        if v.len() != array.cols() {
            return Err(Error::Dimension(format!("{} column variations for {} columns", v.len(), array.cols())));
        }
    }
    let origin = inputs.first().map_or(0.0, TimeSignal::origin);
    if inputs.iter().any(|s| s.origin() != origin) {
        return Err(Error::Domain("input wires belong to different windows".into()));
    }
    let t = params.window();
    let gates: Vec<&TimeSignal> = inputs.iter().collect();

    let results: Vec<Result<ColumnTrace>> = (0..array.cols())
        .into_par_iter()
        .map(|j| {
            let variation = options.variations.as_ref().map_or_else(ColumnVariation::default, |v| v[j]);
            let mut column_params = *params;
            column_params.v_th_latch += variation.latch_offset;
            let column_params = column_params.validated()?;
            let drive = ColumnDrive::from_signals(origin, &array.column_currents(j), &gates, array.bias(j), t)?
                .scaled(variation.current_scale);
            match simulate_column(&drive, &column_params, &options.model, options.tolerance) {
                Err(Error::NoCrossing { delivered, .. }) if options.saturate => Ok(ColumnTrace {
                    origin,
                    samples: vec![(0.0, column_params.v_reset), (2.0 * t, column_params.v_reset - delivered / column_params.capacitance)],
                    crossing_time: 2.0 * t,
                    charge: delivered,
                    saturated: true,
                }),
                other => other,
            }
        })
        .collect();

    let mut traces = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (column, r) in results.into_iter().enumerate() {
        match r {
            Ok(trace) => traces.push(trace),
            Err(error) => failures.push(ColumnFailure { column, error }),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Columns(failures));
    }
    let outputs = traces
        .iter()
        .map(|tr| {
            let rise = if options.saturate { tr.crossing_time.clamp(t, 2.0 * t) } else { tr.crossing_time };
            TimeSignal::in_window(origin, &[(rise, 3.0 * t)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VmmRun { outputs, traces })
}

/// Runs a four-quadrant (or reduced two-quadrant) array on differential
/// inputs. In two-quadrant mode the negative input wires are ignored.
///
/// Variations may hold one entry per output pair, shared by both wires, or
/// one per wire with the positive wires first.
pub fn run_vmm_quad(inputs: &[DifferentialSignal], array: &QuadArray, params: &CircuitParams, options: &VmmOptions) -> Result<QuadRun> {
    if inputs.len() != array.inputs() {
        return Err(Error::Dimension(format!(
            "{} differential inputs for an array with {} inputs",
            inputs.len(),
            array.inputs()
        )));
    }
    let mut wires: Vec<TimeSignal> = inputs.iter().map(|p| p.plus.clone()).collect();
    if array.input_wires() == InputWires::Differential {
        wires.extend(inputs.iter().map(|p| p.minus.clone()));
    }
    let m = array.outputs();
    let (plus_options, minus_options) = match &options.variations {
        Some(v) if v.len() == 2 * m => (
            VmmOptions { variations: Some(v[..m].to_vec()), ..options.clone() },
            VmmOptions { variations: Some(v[m..].to_vec()), ..options.clone() },
        ),
        _ => (options.clone(), options.clone()),
    };
    let plus = run_vmm(&wires, &array.output_array(Polarity::Plus), params, &plus_options)?;
    let minus = run_vmm(&wires, &array.output_array(Polarity::Minus), params, &minus_options)?;
    let outputs = plus
        .outputs
        .into_iter()
        .zip(minus.outputs)
        .map(|(p, m)| DifferentialSignal::new(p, m))
        .collect();
    Ok(QuadRun { outputs, plus: plus.traces, minus: minus.traces })
}

#[cfg(test)]
mod tests;
