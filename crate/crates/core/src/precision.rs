//! Non-idealities and effective precision.
//!
//! Covers the drain-voltage dependence of the programmed currents, weight
//! tuning error, per-evaluation current noise and latch threshold mismatch.
//! Random draws come from ChaCha streams keyed by `(seed, purpose, index)`,
//! so Monte Carlo trials give the same numbers in any order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analog::{run_vmm, CircuitParams, ColumnVariation, DeviceModel, VmmOptions};
use crate::compiler::{compile_array, CurrentSourceArray, QuadArray, WeightMatrix};
use crate::error::{Error, Result};
use crate::network::{compile_network, run_network, CompiledNetwork, LayerSpec};
use crate::signal::{decode_output, encode_value, EncodingMode};

/// Ceiling on reported effective bits (an error-free run would be infinite).
pub const MAX_EFFECTIVE_BITS: f64 = 16.0;
/// Latch threshold mismatch of the implemented S-R latch, V rms.
pub const DEFAULT_SIGMA_LATCH: f64 = 0.020;

const STREAM_TUNING: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_LATCH: u64 = 3;
const STREAM_INPUT: u64 = 4;

/// Generator for one purpose/layer/index triple of a seeded run.
fn stream(seed: u64, purpose: u64, layer: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | (layer << 40) | index);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Relative programming error of each source, drawn once per array.
    pub sigma_tuning: f64,
    /// Relative current noise, redrawn for every evaluation.
    pub sigma_noise: f64,
    /// Latch threshold offset, V rms.
    pub sigma_latch: f64,
    pub seed: u64,
    /// Retune each column's currents by `ΔV'/ΔV` to absorb its latch offset.
    pub compensate_latch: bool,
}

impl NoiseSpec {
    /// No perturbation at all.
    pub fn none() -> Self {
        Self { sigma_tuning: 0.0, sigma_noise: 0.0, sigma_latch: 0.0, seed: 0, compensate_latch: true }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validated(self) -> Result<Self> {
        for (name, s) in [("sigma_tuning", self.sigma_tuning), ("sigma_noise", self.sigma_noise), ("sigma_latch", self.sigma_latch)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Domain(format!("{name} must be >= 0, got {s}")));
            }
        }
        Ok(self)
    }
}

impl Default for NoiseSpec {
    /// 0.3 % tuning error, 0.1 % read noise and compensated 20 mV latch
    /// mismatch.
    fn default() -> Self {
        Self { sigma_tuning: 0.003, sigma_noise: 0.001, sigma_latch: DEFAULT_SIGMA_LATCH, seed: 0, compensate_latch: true }
    }
}

/// Drain-voltage factor of the current law relative to `λ = 0`.
fn saturation_ratio(delta_vd: f64, v_reset: f64, v_thermal: f64) -> f64 {
    let f = |v: f64| -(-v / v_thermal).exp_m1();
    f(v_reset - delta_vd) / f(v_reset)
}

/// DIBL coefficient at which
/// `|I(V_RESET) - I(V_RESET - ΔV_D)| / I(V_RESET)` equals `target_error`.
pub fn calibrate_dibl(target_error: f64, delta_vd: f64, v_reset: f64, v_thermal: f64) -> Result<f64> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(Error::Calibration(format!("target error must lie in (0, 1), got {target_error}")));
    }
    if !(delta_vd > 0.0 && v_reset > delta_vd && v_thermal > 0.0) {
        return Err(Error::Calibration(format!(
            "need V_RESET > ΔV_D > 0 and V_T > 0, got V_RESET = {v_reset}, ΔV_D = {delta_vd}, V_T = {v_thermal}"
        )));
    }
    let s = saturation_ratio(delta_vd, v_reset, v_thermal);
    // Error(λ) = 1 - s·exp(-λ ΔV_D).
    let lambda = (s.ln() - (-target_error).ln_1p()) / delta_vd;
    if lambda < 0.0 {
        return Err(Error::Calibration(format!(
            "target {target_error} is below the error {:.3e} left by subthreshold saturation alone",
            1.0 - s
        )));
    }
    Ok(lambda)
}

/// Relative change of the source current over the drain swing.
pub fn relative_output_error(model: &DeviceModel, params: &CircuitParams) -> f64 {
    let high = model.current_factor(params.v_reset, params.v_thermal);
    let low = model.current_factor(params.v_th_latch, params.v_thermal);
    (high - low).abs() / high
}

fn perturb_factor(tuning: &mut ChaCha8Rng, noise: &mut ChaCha8Rng, spec: &NoiseSpec) -> f64 {
    (1.0 + gaussian(tuning, spec.sigma_tuning)) * (1.0 + gaussian(noise, spec.sigma_noise))
}

/// Multiplies every source by `(1 + ε_tuning)(1 + ε_noise)`. Tuning errors
/// depend only on the seed; noise is redrawn for each `evaluation`. Currents
/// are clamped to `[0, I_max]` and biases to `>= 0`.
pub fn perturb_array(array: &CurrentSourceArray, spec: &NoiseSpec, evaluation: u64) -> CurrentSourceArray {
    perturb_array_in_layer(array, spec, 0, evaluation)
}

fn perturb_array_in_layer(array: &CurrentSourceArray, spec: &NoiseSpec, layer: u64, evaluation: u64) -> CurrentSourceArray {
    let mut tuning = stream(spec.seed, STREAM_TUNING, layer, 0);
    let mut noise = stream(spec.seed, STREAM_NOISE, layer, evaluation);
    let mut tuning_bias = stream(spec.seed, STREAM_TUNING, layer, 1);
    let mut noise_bias = stream(spec.seed, STREAM_NOISE, layer, evaluation | 1 << 39);
    let i_max = array.i_max();
    let cells = array.map_currents(|_, _, c| (c * perturb_factor(&mut tuning, &mut noise, spec)).clamp(0.0, i_max), |_, b| b);
    cells.map_currents(|_, _, c| c, |_, b| (b * perturb_factor(&mut tuning_bias, &mut noise_bias, spec)).max(0.0))
}

/// [`perturb_array`] for a four-quadrant array. Every physical source gets
/// its own draw.
pub fn perturb_quad(array: &QuadArray, spec: &NoiseSpec, layer: u64, evaluation: u64) -> QuadArray {
    let mut tuning = stream(spec.seed, STREAM_TUNING, layer, 0);
    let mut noise = stream(spec.seed, STREAM_NOISE, layer, evaluation);
    let i_max = array.i_max();
    let factor = |t: &mut ChaCha8Rng, n: &mut ChaCha8Rng| perturb_factor(t, n, spec);
    let mut tuning_bias = stream(spec.seed, STREAM_TUNING, layer, 1);
    let mut noise_bias = stream(spec.seed, STREAM_NOISE, layer, evaluation | 1 << 39);
    array.map_currents(
        |_, _, _, c| (c * factor(&mut tuning, &mut noise)).clamp(0.0, i_max),
        |_, _, b| (b * factor(&mut tuning_bias, &mut noise_bias)).max(0.0),
    )
}

/// Draws one latch threshold offset per output wire. With compensation the
/// wire's currents are scaled by `ΔV'/ΔV` so it sinks the reduced swing in
/// the nominal time.
pub fn perturb_latch_threshold(params: &CircuitParams, spec: &NoiseSpec, wires: usize) -> Result<Vec<ColumnVariation>> {
    perturb_latch_in_layer(params, spec, 0, wires)
}

fn perturb_latch_in_layer(params: &CircuitParams, spec: &NoiseSpec, layer: u64, wires: usize) -> Result<Vec<ColumnVariation>> {
    let mut rng = stream(spec.seed, STREAM_LATCH, layer, 0);
    let swing = params.delta_vd();
    (0..wires)
        .map(|j| {
            let offset = gaussian(&mut rng, spec.sigma_latch);
            let shifted = swing - offset;
            if shifted <= 0.0 || params.v_th_latch + offset <= 0.0 {
                return Err(Error::Domain(format!(
                    "latch offset {offset:.4} V on wire {j} leaves no drain swing (ΔV_D = {swing} V)"
                )));
            }
            let current_scale = if spec.compensate_latch { shifted / swing } else { 1.0 };
            Ok(ColumnVariation { latch_offset: offset, current_scale })
        })
        .collect()
}

/// Perturbed copy of a compiled network: per-layer tuning/noise streams and
/// one latch offset per output wire (positive wires first).
pub fn perturb_network(network: &CompiledNetwork, spec: &NoiseSpec, evaluation: u64) -> Result<CompiledNetwork> {
    let layers = network
        .layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let mut out = layer.clone();
            out.array = perturb_quad(&layer.array, spec, k as u64, evaluation);
            out.variations = Some(perturb_latch_in_layer(&layer.spec.params, spec, k as u64, 2 * layer.array.outputs())?);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledNetwork { layers })
}

#[derive(Debug, Clone, Copy)]
pub enum PrecisionTarget<'a> {
    /// Single-quadrant array on inputs in `[0, 1]`.
    Array { weights: &'a WeightMatrix, params: &'a CircuitParams },
    /// Signed network on inputs in `[-1, 1]`.
    Network(&'a [LayerSpec]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub trials: usize,
    /// Number of compared outputs.
    pub outputs: usize,
    /// Largest absolute output error, as a fraction of full scale.
    pub max_rel_error: f64,
    pub rms_error: f64,
    /// `log2(1 / max_rel_error)`, capped at [`MAX_EFFECTIVE_BITS`].
    pub effective_bits: f64,
    pub rms_bits: f64,
}

fn bits(error: f64) -> f64 {
    if error == 0.0 {
        MAX_EFFECTIVE_BITS
    } else {
        (-error.log2()).clamp(0.0, MAX_EFFECTIVE_BITS)
    }
}

/// Monte Carlo comparison of the perturbed non-ideal circuit with the ideal
/// one on `trials` random admissible inputs. Late columns saturate to the
/// zero code instead of failing.
pub fn effective_precision(target: PrecisionTarget<'_>, model: &DeviceModel, noise: &NoiseSpec, trials: usize) -> Result<PrecisionReport> {
    if trials < 100 {
        return Err(Error::Domain(format!("need at least 100 trials, got {trials}")));
    }
    let noise = noise.validated()?;
    let options = VmmOptions { saturate: true, ..VmmOptions::with_model(*model) };

    let errors: Vec<Vec<f64>> = match target {
        PrecisionTarget::Array { weights, params } => {
            let nominal = compile_array(weights, &params.budget())?;
            let latch = perturb_latch_threshold(params, &noise, weights.cols())?;
            let options = VmmOptions { variations: Some(latch), ..options };
            let clock = params.clock;
            let unit = Uniform::new_inclusive(0.0, 1.0);
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(noise.seed, STREAM_INPUT, 0, t as u64);
                    let inputs = (0..weights.rows())
                        .map(|_| encode_value(unit.sample(&mut rng), &clock, EncodingMode::RisingEdge, 0))
                        .collect::<Result<Vec<_>>>()?;
                    let ideal = run_vmm(&inputs, &nominal, params, &VmmOptions::ideal())?;
                    let real = run_vmm(&inputs, &perturb_array(&nominal, &noise, t as u64), params, &options)?;
                    ideal
                        .outputs
                        .iter()
                        .zip(&real.outputs)
                        .map(|(a, b)| {
                            let ya = decode_output(a, &clock, EncodingMode::RisingEdge, 0)?;
                            let yb = decode_output(b, &clock, EncodingMode::RisingEdge, 0)?;
                            Ok((ya - yb).abs())
                        })
                        .collect()
                })
                .collect::<Result<_>>()?
        }
        PrecisionTarget::Network(layers) => {
            let nominal = compile_network(layers)?;
            let signed = Uniform::new_inclusive(-1.0, 1.0);
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(noise.seed, STREAM_INPUT, 0, t as u64);
                    let x: Vec<f64> = (0..nominal.inputs()).map(|_| signed.sample(&mut rng)).collect();
                    let ideal = run_network(&x, &nominal, &VmmOptions::ideal(), 0)?;
                    let real = run_network(&x, &perturb_network(&nominal, &noise, t as u64)?, &options, 0)?;
                    Ok(ideal.outputs.iter().zip(&real.outputs).map(|(a, b)| (a - b).abs()).collect())
                })
                .collect::<Result<_>>()?
        }
    };

    let flat: Vec<f64> = errors.into_iter().flatten().collect();
    let max_rel_error = flat.iter().copied().fold(0.0, f64::max);
    let rms_error = (flat.iter().map(|e| e * e).sum::<f64>() / flat.len() as f64).sqrt();
    Ok(PrecisionReport {
        trials,
        outputs: flat.len(),
        max_rel_error,
        rms_error,
        effective_bits: bits(max_rel_error),
        rms_bits: bits(rms_error),
    })
}
