//! Time-domain vector-by-matrix multipliers: signal encoding, weight
//! compilation, column simulation, pipelined networks, non-ideality analysis
//! and performance estimation.

pub mod analog;
pub mod compiler;
pub mod error;
pub mod network;
pub mod perf;
pub mod precision;
pub mod signal;

pub use analog::{
    run_vmm, run_vmm_quad, simulate_column, CircuitParams, ColumnTrace, ColumnVariation, DeviceModel, QuadRun, VmmOptions, VmmRun,
};
pub use compiler::{
    compile_array, compile_column, compute_imax, decompose_four_quadrant, quantize_weights, reduce_two_quadrant, scale_for_slope,
    ChargeBudget, CurrentSourceArray, QuadArray, Quadrant, WeightMatrix,
};
pub use error::{Error, Result};
pub use network::{
    build_schedule, compile_network, rectify_linear, reference_network, run_network, CompiledNetwork, LayerSpec, PipelineSchedule,
    QuadrantMode,
};
pub use perf::{area_breakdown, estimate, io_conversion, latency, PerfReport, TechParams};
pub use precision::{calibrate_dibl, effective_precision, relative_output_error, NoiseSpec, PrecisionReport, PrecisionTarget};
pub use signal::{
    decode_output, differential_value, encode_value, ClockConfig, DifferentialSignal, EncodingMode, Phase, TimeSignal,
};
