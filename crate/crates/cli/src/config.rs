//! Network file schema and loading.
//!
//! ```toml
//! [clock]
//! T_ns = 32.0
//! tau_reset_ns = 1.0
//! tau_f_ns = 0.5
//!
//! [circuit]
//! C_per_input_pF = 0.04
//! V_RESET_V = 0.7
//! V_TH_V = 0.5
//!
//! [model]
//! kind = "dibl"
//! target_error = 0.02
//!
//! [noise]
//! sigma_tuning = 0.003
//!
//! [[layers]]
//! weights = "layer1.csv"
//! quadrant = "four"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tdvmm::analog::{DEFAULT_C_PER_INPUT, DEFAULT_TOLERANCE, DEFAULT_V_THERMAL};
use tdvmm::precision::DEFAULT_SIGMA_LATCH;
use tdvmm::{calibrate_dibl, CircuitParams, ClockConfig, DeviceModel, EncodingMode, LayerSpec, NoiseSpec, QuadrantMode, WeightMatrix};

use crate::csvio::read_matrix;
use crate::error::{CliError, CliResult};

const NANO: f64 = 1e-9;
const PICO: f64 = 1e-12;
const FEMTO: f64 = 1e-15;
const MILLI: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    #[serde(rename = "T_ns")]
    pub t_ns: f64,
    #[serde(default = "default_tau_reset_ns")]
    pub tau_reset_ns: f64,
    #[serde(default)]
    pub tau_f_ns: f64,
}

fn default_tau_reset_ns() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    #[serde(rename = "C_per_input_pF", default = "default_c_per_input_pf")]
    pub c_per_input_pf: f64,
    #[serde(rename = "V_RESET_V", default = "default_v_reset")]
    pub v_reset_v: f64,
    #[serde(rename = "V_TH_V", default = "default_v_th")]
    pub v_th_v: f64,
    #[serde(rename = "V_T_mV", default = "default_v_thermal_mv")]
    pub v_thermal_mv: f64,
    #[serde(rename = "charge_offset_fC", default)]
    pub charge_offset_fc: f64,
}

fn default_c_per_input_pf() -> f64 {
    DEFAULT_C_PER_INPUT / PICO
}

fn default_v_reset() -> f64 {
    0.7
}

fn default_v_th() -> f64 {
    0.5
}

fn default_v_thermal_mv() -> f64 {
    DEFAULT_V_THERMAL / MILLI
}

impl Default for CircuitSection {
    fn default() -> Self {
        Self {
            c_per_input_pf: default_c_per_input_pf(),
            v_reset_v: default_v_reset(),
            v_th_v: default_v_th(),
            v_thermal_mv: default_v_thermal_mv(),
            charge_offset_fc: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ideal,
    Dibl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub kind: ModelKind,
    /// Explicit DIBL coefficient; calibrated from `target_error` when absent.
    #[serde(rename = "lambda_per_V", default, skip_serializing_if = "Option::is_none")]
    pub lambda_per_v: Option<f64>,
    #[serde(default = "default_target_error")]
    pub target_error: f64,
    /// Drain voltage at which sources deliver their programmed current;
    /// defaults to `V_RESET`.
    #[serde(rename = "V_ref_V", default, skip_serializing_if = "Option::is_none")]
    pub v_ref_v: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_target_error() -> f64 {
    0.02
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ideal,
            lambda_per_v: None,
            target_error: default_target_error(),
            v_ref_v: None,
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub sigma_tuning: f64,
    #[serde(default)]
    pub sigma_noise: f64,
    #[serde(rename = "sigma_latch_mV", default = "default_sigma_latch_mv")]
    pub sigma_latch_mv: f64,
    #[serde(default = "default_true")]
    pub compensate_latch: bool,
}

fn default_sigma_latch_mv() -> f64 {
    DEFAULT_SIGMA_LATCH / MILLI
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    /// Weight CSV, relative to the network file.
    pub weights: PathBuf,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default = "default_quadrant")]
    pub quadrant: QuadrantMode,
    /// Input encoding; rising edge for the first layer and pulse duration
    /// (the rectifier output) for later ones unless set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<EncodingMode>,
}

fn default_w_max() -> f64 {
    1.0
}

fn default_quadrant() -> QuadrantMode {
    QuadrantMode::Four
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub clock: ClockSection,
    #[serde(default)]
    pub circuit: CircuitSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    pub layers: Vec<LayerSection>,
}

/// A network file with weights loaded and every default filled in.
#[derive(Debug, Clone)]
pub struct Network {
    pub file: NetworkFile,
    pub clock: ClockConfig,
    pub layers: Vec<LayerSpec>,
}

impl Network {
    /// Device model of `kind`, taking coefficients from the file.
    pub fn model(&self, kind: ModelKind) -> CliResult<DeviceModel> {
        let m = &self.file.model;
        let c = &self.file.circuit;
        match kind {
            ModelKind::Ideal => Ok(DeviceModel::Ideal),
            ModelKind::Dibl => {
                let lambda = match m.lambda_per_v {
                    Some(l) => l,
                    None => calibrate_dibl(m.target_error, c.v_reset_v - c.v_th_v, c.v_reset_v, c.v_thermal_mv * MILLI)
                        .map_err(|e| CliError::core("model", e))?,
                };
                DeviceModel::dibl(lambda, m.v_ref_v.unwrap_or(c.v_reset_v)).map_err(|e| CliError::core("model", e))
            }
        }
    }

    /// Noise of the `[noise]` section with `seed`, if the section exists.
    pub fn noise(&self, seed: u64) -> Option<NoiseSpec> {
        self.file.noise.as_ref().map(|n| NoiseSpec {
            sigma_tuning: n.sigma_tuning,
            sigma_noise: n.sigma_noise,
            sigma_latch: n.sigma_latch_mv * MILLI,
            seed,
            compensate_latch: n.compensate_latch,
        })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].weights.rows()
    }
}

pub fn parse_network(text: &str, base_dir: &Path, name: &str) -> CliResult<Network> {
    let file: NetworkFile = toml::from_str(text).map_err(|e| CliError::schema(format!("{name}: {e}")))?;
    if file.layers.is_empty() {
        return Err(CliError::schema(format!("{name}: at least one [[layers]] entry is required")));
    }
    let ck = &file.clock;
    let clock = ClockConfig::new(ck.t_ns * NANO, ck.tau_reset_ns * NANO, ck.tau_f_ns * NANO).map_err(|e| CliError::core("clock", e))?;
    let c = &file.circuit;
    let layers = file
        .layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let path = base_dir.join(&layer.weights);
            let (rows, cols, data) = read_matrix(&path)?;
            let context = format!("layer {} ({})", k + 1, layer.weights.display());
            let weights = WeightMatrix::new(rows, cols, data, layer.w_max).map_err(|e| CliError::core(&context, e))?;
            weights.check_four_quadrant().map_err(|e| CliError::core(&context, e))?;
            let mut params = CircuitParams::for_inputs(clock, rows, c.c_per_input_pf * PICO, c.v_reset_v, c.v_th_v)
                .map_err(|e| CliError::core("circuit", e))?;
            params.v_thermal = c.v_thermal_mv * MILLI;
            params.charge_offset = c.charge_offset_fc * FEMTO;
            let params = params.validated().map_err(|e| CliError::core("circuit", e))?;
            let encoding = layer.encoding.unwrap_or(if k == 0 { EncodingMode::RisingEdge } else { EncodingMode::PulseDuration });
            Ok(LayerSpec { weights, quadrant: layer.quadrant, encoding, params })
        })
        .collect::<CliResult<Vec<_>>>()?;
    tdvmm::network::check_topology(&layers).map_err(|e| CliError::core(name, e))?;
    Ok(Network { file, clock, layers })
}

pub fn load_network(path: &Path) -> CliResult<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_network(&text, base, &path.display().to_string())
}
