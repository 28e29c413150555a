//! Multi-layer time-domain networks.
//!
//! Layers are four-quadrant (or reduced two-quadrant) VMMs joined by a
//! rectify-linear stage: the AND of a differential pair's latch outputs is
//! high for `max(0, t⁻ - t⁺)`, which becomes the phase-I duration of the next
//! layer's input, and the SET-driven OR appends the phase-II pulse. Layer `k`
//! handles sample `s` in window `s + k`, so a new sample enters every
//! `2T + τ_reset`.

use serde::{Deserialize, Serialize};

use crate::analog::{run_vmm_quad, CircuitParams, ColumnVariation, VmmOptions};
use crate::compiler::{decompose_four_quadrant, reduce_two_quadrant, QuadArray, WeightMatrix};
use crate::error::{Error, Result};
use crate::signal::{differential_value, encode_value, ClockConfig, DifferentialSignal, EncodingMode, TimeSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantMode {
    Four,
    Two,
}

/// One VMM layer: weights, wiring and the encoding of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub weights: WeightMatrix,
    pub quadrant: QuadrantMode,
    pub encoding: EncodingMode,
    pub params: CircuitParams,
}

/// Checks that layer dimensions chain and every layer runs on one clock.
pub fn check_topology(layers: &[LayerSpec]) -> Result<()> {
    let first = layers.first().ok_or_else(|| Error::Dimension("network has no layers".into()))?;
    for (k, pair) in layers.windows(2).enumerate() {
        if pair[0].weights.cols() != pair[1].weights.rows() {
            return Err(Error::Dimension(format!(
                "layer {} has {} outputs but layer {} has {} inputs",
                k + 1,
                pair[0].weights.cols(),
                k + 2,
                pair[1].weights.rows()
            )));
        }
    }
    if layers.iter().any(|l| l.params.clock != first.params.clock) {
        return Err(Error::Domain("all layers must share one clock".into()));
    }
    Ok(())
}

/// A layer with its programmed array and per-wire column variations
/// (plus wires first, then minus wires).
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLayer {
    pub spec: LayerSpec,
    pub array: QuadArray,
    pub variations: Option<Vec<ColumnVariation>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledNetwork {
    pub layers: Vec<CompiledLayer>,
}

impl CompiledNetwork {
    pub fn clock(&self) -> ClockConfig {
        self.layers[0].spec.params.clock
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].array.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].array.outputs()
    }
}

pub fn compile_network(layers: &[LayerSpec]) -> Result<CompiledNetwork> {
    check_topology(layers)?;
    let compiled = layers
        .iter()
        .map(|spec| {
            let full = decompose_four_quadrant(&spec.weights, &spec.params.budget())?;
            let array = match spec.quadrant {
                QuadrantMode::Four => full,
                QuadrantMode::Two => reduce_two_quadrant(&full),
            };
            Ok(CompiledLayer { spec: spec.clone(), array, variations: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledNetwork { layers: compiled })
}

/// AND/OR stage between layers. Returns the next layer's input wire in
/// window `window_index + 1`: a phase-I pulse of `max(0, t⁻ - t⁺)` followed
/// by the forced-high phase II.
pub fn rectify_linear(pair: &DifferentialSignal, clock: &ClockConfig, window_index: u64) -> Result<TimeSignal> {
    let value = differential_value(pair, clock, EncodingMode::RisingEdge, window_index)?;
    encode_value(value.max(0.0), clock, EncodingMode::PulseDuration, window_index + 1)
}

/// Crossing times (local to the layer's window) of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub window: u64,
    pub origin: f64,
    pub plus_crossings: Vec<f64>,
    pub minus_crossings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRun {
    /// Signed outputs of the last layer.
    pub outputs: Vec<f64>,
    pub layers: Vec<LayerRecord>,
}

/// Runs one sample whose first layer occupies window `first_window`.
pub fn run_network(x: &[f64], network: &CompiledNetwork, options: &VmmOptions, first_window: u64) -> Result<NetworkRun> {
    if x.len() != network.inputs() {
        return Err(Error::Dimension(format!("{} inputs for a network with {} inputs", x.len(), network.inputs())));
    }
    if let Some(i) = x.iter().position(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::Domain(format!("input {i} = {} outside [-1, 1]", x[i])));
    }
    let clock = network.clock();
    let first = &network.layers[0];
    let mut inputs: Vec<DifferentialSignal> = x
        .iter()
        .map(|&v| DifferentialSignal::encode(v, &clock, first.spec.encoding, first_window))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(network.layers.len());

    for (k, layer) in network.layers.iter().enumerate() {
        let window = first_window + k as u64;
        let layer_options = VmmOptions { variations: layer.variations.clone(), ..options.clone() };
        let run = run_vmm_quad(&inputs, &layer.array, &layer.spec.params, &layer_options)?;
        records.push(LayerRecord {
            window,
            origin: clock.window_start(window),
            plus_crossings: run.plus.iter().map(|t| t.crossing_time).collect(),
            minus_crossings: run.minus.iter().map(|t| t.crossing_time).collect(),
        });
        match network.layers.get(k + 1) {
            None => {
                let outputs = run
                    .outputs
                    .iter()
                    .map(|pair| differential_value(pair, &clock, EncodingMode::RisingEdge, window))
                    .collect::<Result<_>>()?;
                return Ok(NetworkRun { outputs, layers: records });
            }
            Some(next) => {
                inputs = run
                    .outputs
                    .iter()
                    .map(|pair| {
                        let mut hidden = rectify_linear(pair, &clock, window)?;
                        if next.spec.encoding == EncodingMode::RisingEdge {
                            let value = crate::signal::decode_input(&hidden, &clock, EncodingMode::PulseDuration, window + 1)?;
                            hidden = encode_value(value, &clock, EncodingMode::RisingEdge, window + 1)?;
                        }
                        let zero = encode_value(0.0, &clock, next.spec.encoding, window + 1)?;
                        Ok(DifferentialSignal::new(hidden, zero))
                    })
                    .collect::<Result<_>>()?;
            }
        }
    }
    unreachable!("networks have at least one layer")
}

/// Floating-point model of the network: `W^T x / (N w_max)` per layer with
/// ReLU between layers.
pub fn reference_network(x: &[f64], layers: &[LayerSpec]) -> Result<Vec<f64>> {
    check_topology(layers)?;
    let mut v = x.to_vec();
    for (k, layer) in layers.iter().enumerate() {
        let w = &layer.weights;
        if v.len() != w.rows() {
            return Err(Error::Dimension(format!("{} values for a layer with {} inputs", v.len(), w.rows())));
        }
        let scale = 1.0 / (w.rows() as f64 * w.w_max());
        let mut y: Vec<f64> = (0..w.cols())
            .map(|j| v.iter().enumerate().map(|(i, xi)| w.get(i, j) * xi).sum::<f64>() * scale)
            .collect();
        if k + 1 < layers.len() {
            y.iter_mut().for_each(|e| *e = e.max(0.0));
        }
        v = y;
    }
    Ok(v)
}

/// Window, SET and RESET placement of one (layer, sample) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSlot {
    pub layer: usize,
    pub sample: usize,
    pub window: u64,
    pub window_start: f64,
    /// Phase-II start; the OR gate forces the inputs high from here.
    pub set_time: f64,
    /// Precharge interval following the window.
    pub reset: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSchedule {
    pub period: f64,
    pub layers: usize,
    pub samples: usize,
    pub slots: Vec<LayerSlot>,
}

impl PipelineSchedule {
    pub fn window(&self, sample: usize, layer: usize) -> u64 {
        (sample + layer) as u64
    }

    /// Time at which the last layer's output for `sample` is complete.
    pub fn output_ready(&self, sample: usize) -> f64 {
        let slot = self.slot(sample, self.layers - 1);
        slot.reset.0
    }

    pub fn total_time(&self) -> f64 {
        self.output_ready(self.samples - 1)
    }

    /// Samples simultaneously inside the pipeline in steady state.
    pub fn in_flight(&self) -> usize {
        self.layers.min(self.samples)
    }

    pub fn slot(&self, sample: usize, layer: usize) -> &LayerSlot {
        &self.slots[sample * self.layers + layer]
    }
}

pub fn build_schedule(layers: &[LayerSpec], clock: &ClockConfig, samples: usize) -> Result<PipelineSchedule> {
    check_topology(layers)?;
    if samples == 0 {
        return Err(Error::Domain("schedule needs at least one sample".into()));
    }
    if layers[0].params.clock != *clock {
        return Err(Error::Domain("schedule clock differs from the layers' clock".into()));
    }
    let t = clock.window();
    let mut slots = Vec::with_capacity(samples * layers.len());
    for sample in 0..samples {
        for layer in 0..layers.len() {
            let window = (sample + layer) as u64;
            let start = clock.window_start(window);
            slots.push(LayerSlot {
                layer,
                sample,
                window,
                window_start: start,
                set_time: start + t,
                reset: (start + 2.0 * t, start + 2.0 * t + clock.tau_reset()),
            });
        }
    }
    Ok(PipelineSchedule { period: clock.period(), layers: layers.len(), samples, slots })
}

/// Streams samples through the schedule, sample `s` entering at window `s`.
pub fn run_pipelined(samples: &[Vec<f64>], network: &CompiledNetwork, options: &VmmOptions) -> Result<Vec<NetworkRun>> {
    samples
        .iter()
        .enumerate()
        .map(|(s, x)| run_network(x, network, options, s as u64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Spacing between successive output windows of the last layer.
    pub achieved_period: f64,
    pub passed: bool,
}

/// Compares pipelined execution with running each sample alone in the
/// first windows.
pub fn pipeline_equivalence_check(samples: &[Vec<f64>], network: &CompiledNetwork, options: &VmmOptions) -> Result<EquivalenceReport> {
    let streamed = run_pipelined(samples, network, options)?;
    let mut max_deviation: f64 = 0.0;
    for (x, run) in samples.iter().zip(&streamed) {
        let alone = run_network(x, network, options, 0)?;
        for (a, b) in run.outputs.iter().zip(&alone.outputs) {
            max_deviation = max_deviation.max((a - b).abs());
        }
    }
    let last = network.layers.len() - 1;
    let achieved_period = if streamed.len() > 1 {
        streamed
            .windows(2)
            .map(|w| w[1].layers[last].origin - w[0].layers[last].origin)
            .fold(0.0, f64::max)
    } else {
        network.clock().period()
    };
    let tolerance = if options.model.is_ideal() { 1e-12 } else { 10.0 * options.tolerance };
    Ok(EquivalenceReport {
        samples: samples.len(),
        max_deviation,
        tolerance,
        achieved_period,
        passed: max_deviation <= tolerance,
    })
}
