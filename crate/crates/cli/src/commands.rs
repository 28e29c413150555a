//! The four subcommands. Each builds a [`Report`]; writing it is left to the
//! caller.

use tdvmm::compiler::Polarity;
use tdvmm::network::{compile_network, run_network};
use tdvmm::perf::TechParams;
use tdvmm::precision::{perturb_network, PrecisionTarget};
use tdvmm::{effective_precision, estimate, DeviceModel, NoiseSpec, Quadrant, VmmOptions};

use crate::config::{ModelKind, Network};
use crate::csvio::Report;
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed and where it came from, echoed in report headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed {
    pub value: u64,
    pub source: &'static str,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn preamble(command: &str) -> Report {
    let mut r = Report::default();
    r.meta("tool", format!("tdvmm {VERSION}"));
    r.meta("command", command);
    r
}

fn echo_network(r: &mut Report, name: &str, net: &Network) {
    r.meta("network", name);
    let text = toml::to_string(&net.file).expect("network file serializes");
    r.meta_block(&text);
}

fn echo_model(r: &mut Report, model: &DeviceModel, tolerance: f64) {
    match model {
        DeviceModel::Ideal => r.meta("model", "ideal"),
        DeviceModel::SubthresholdDibl { lambda, v_ref } => {
            r.meta("model", format!("dibl lambda_per_V={lambda} V_ref_V={v_ref} tolerance={tolerance}"))
        }
    }
}

/// Programmed currents of every layer.
pub fn compile(net: &Network, name: &str) -> CliResult<Report> {
    let compiled = compile_network(&net.layers).map_err(|e| CliError::core(name, e))?;
    let mut report = preamble("compile");
    echo_network(&mut report, name, net);
    report.set_header_str(&["layer", "block", "input", "output", "current_A", "current_over_Imax"]);
    for (k, layer) in compiled.layers.iter().enumerate() {
        let a = &layer.array;
        let i_max = a.i_max();
        report.meta(&format!("layer {} I_max_A", k + 1), num(i_max));
        for q in Quadrant::ALL {
            if a.block(q).is_none() {
                continue;
            }
            for i in 0..a.inputs() {
                for j in 0..a.outputs() {
                    let c = a.current(q, i, j);
                    report.push(vec![(k + 1).to_string(), q.label().into(), i.to_string(), j.to_string(), num(c), num(c / i_max)]);
                }
            }
        }
        for (polarity, label) in [(Polarity::Plus, "bias+"), (Polarity::Minus, "bias-")] {
            for j in 0..a.outputs() {
                let b = a.bias(polarity, j);
                report.push(vec![(k + 1).to_string(), label.into(), String::new(), j.to_string(), num(b), num(b / i_max)]);
            }
        }
    }
    Ok(report)
}

fn vmm_options(net: &Network, model: DeviceModel) -> VmmOptions {
    VmmOptions { saturate: !model.is_ideal(), tolerance: net.file.model.tolerance, ..VmmOptions::with_model(model) }
}

/// Runs every input row through the network, sample `s` in window `s`.
pub fn simulate(net: &Network, name: &str, inputs: &(usize, usize, Vec<f64>), model: ModelKind, seed: Seed) -> CliResult<Report> {
    let (rows, cols, data) = inputs;
    if *cols != net.inputs() {
        return Err(CliError::domain(format!("inputs have {cols} columns but the network has {} inputs", net.inputs())));
    }
    let device = net.model(model)?;
    let options = vmm_options(net, device);
    let nominal = compile_network(&net.layers).map_err(|e| CliError::core(name, e))?;
    let noise = net.noise(seed.value);

    let mut report = preamble("simulate");
    report.meta("seed", format!("{} ({})", seed.value, seed.source));
    echo_network(&mut report, name, net);
    echo_model(&mut report, &device, options.tolerance);
    report.meta("noise", if noise.is_some() { "on" } else { "off" });

    let outputs = net.layers.last().expect("networks have layers").weights.cols();
    let mut header = vec!["sample".to_string()];
    header.extend((0..outputs).map(|j| format!("y{j}")));
    for (k, layer) in net.layers.iter().enumerate() {
        for j in 0..layer.weights.cols() {
            header.push(format!("L{}_plus{j}_ns", k + 1));
            header.push(format!("L{}_minus{j}_ns", k + 1));
        }
    }
    report.set_header(header);
    for s in 0..*rows {
        let x = &data[s * cols..(s + 1) * cols];
        let context = format!("input row {s}");
        let network = match &noise {
            Some(spec) => perturb_network(&nominal, spec, s as u64).map_err(|e| CliError::core(&context, e))?,
            None => nominal.clone(),
        };
        let run = run_network(x, &network, &options, s as u64).map_err(|e| CliError::core(&context, e))?;
        let mut row = vec![s.to_string()];
        row.extend(run.outputs.iter().map(|&y| num(y)));
        for record in &run.layers {
            for (p, m) in record.plus_crossings.iter().zip(&record.minus_crossings) {
                row.push(num(p / 1e-9));
                row.push(num(m / 1e-9));
            }
        }
        report.push(row);
    }
    Ok(report)
}

/// Effective precision of each layer on its own and of the whole network.
pub fn precision(net: &Network, name: &str, model: ModelKind, trials: usize, seed: Seed) -> CliResult<Report> {
    let device = net.model(model)?;
    let noise = net.noise(seed.value).unwrap_or_else(|| NoiseSpec::none().with_seed(seed.value));

    let mut report = preamble("precision");
    report.meta("seed", format!("{} ({})", seed.value, seed.source));
    report.meta("trials", trials);
    echo_network(&mut report, name, net);
    echo_model(&mut report, &device, net.file.model.tolerance);

    report.set_header_str(&["scope", "trials", "outputs", "max_rel_error", "rms_error", "effective_bits", "rms_bits"]);
    let mut scopes: Vec<(String, &[tdvmm::LayerSpec])> =
        (0..net.layers.len()).map(|k| (format!("layer{}", k + 1), &net.layers[k..=k])).collect();
    scopes.push(("network".into(), &net.layers[..]));
    for (scope, layers) in scopes {
        let r = effective_precision(PrecisionTarget::Network(layers), &device, &noise, trials).map_err(|e| CliError::core(&scope, e))?;
        report.push(vec![
            scope,
            r.trials.to_string(),
            r.outputs.to_string(),
            num(r.max_rel_error),
            num(r.rms_error),
            num(r.effective_bits),
            num(r.rms_bits),
        ]);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Conservative,
    Aggressive,
}

/// `N` values of the size sweep: 10, then 50 to 1000 in steps of 50.
pub fn default_sizes() -> Vec<usize> {
    std::iter::once(10).chain((50..=1000).step_by(50)).collect()
}

pub fn sweep(sizes: &[usize], precisions: &[u32], preset: Preset, io: bool) -> CliResult<Report> {
    if let Some(n) = sizes.iter().find(|&&n| n == 0) {
        return Err(CliError::domain(format!("VMM size must be positive, got {n}")));
    }
    if let Some(p) = precisions.iter().find(|&&p| !(1..=32).contains(&p)) {
        return Err(CliError::domain(format!("precision must lie in 1..=32 bits, got {p}")));
    }
    let tech = match preset {
        Preset::Conservative => TechParams::conservative(),
        Preset::Aggressive => TechParams::aggressive(tdvmm::analog::DEFAULT_C_DRAIN, tdvmm::analog::DEFAULT_C_PER_INPUT),
    };
    let mut report = preamble("sweep");
    let preset_name = match preset {
        Preset::Conservative => "conservative",
        Preset::Aggressive => "aggressive",
    };
    report.meta("preset", preset_name);
    report.meta("io", if io { "on" } else { "off" });
    report.meta_block(&toml::to_string(&tech).expect("technology constants serialize"));

    report.set_header_str(&[
        "preset",
        "N",
        "p",
        "latency_ns",
        "energy_total_pJ",
        "energy_dynamic_pJ",
        "energy_static_pJ",
        "energy_io_pJ",
        "fJ_per_Op",
        "TOps_per_J",
        "io_fraction",
        "area_array_um2",
        "area_capacitor_um2",
        "area_neuron_um2",
        "area_io_um2",
        "area_total_um2",
        "projection",
    ]);
    for &n in sizes {
        for &p in precisions {
            let r = estimate(n, p, &tech, io);
            report.push(vec![
                preset_name.into(),
                n.to_string(),
                p.to_string(),
                num(r.latency / 1e-9),
                num(r.energy_total / 1e-12),
                num(r.energy_dynamic / 1e-12),
                num(r.energy_static / 1e-12),
                num(r.energy_io / 1e-12),
                num(r.fj_per_op),
                num(r.efficiency / 1e12),
                num(r.io_fraction),
                num(r.area.array),
                num(r.area.capacitor),
                num(r.area.neuron),
                num(r.area.io),
                num(r.area.total),
                (preset == Preset::Aggressive).to_string(),
            ]);
        }
    }
    Ok(report)
}
