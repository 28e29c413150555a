//! Latency, energy and area estimates for an `N × N` time-domain VMM.
//!
//! Energy per evaluation is `e_cell N² + e_line N + P_s N (2T + τ_reset)`
//! with `T = T0 2^p`: capacitor and gate-line charging scale with the cell
//! count, per-line overheads with `N`, and leakage of each neuron's logic
//! with the time it spends powered. One evaluation counts `2N²` operations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FEMTO: f64 = 1e-15;

/// Energy or efficiency target of one calibration point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorTarget {
    /// J per evaluation.
    Energy(f64),
    /// Ops/J.
    Efficiency(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub n: usize,
    pub target: AnchorTarget,
    /// Share of the energy that is static, if known.
    pub static_fraction: Option<f64>,
}

impl Anchor {
    pub fn energy(&self) -> f64 {
        match self.target {
            AnchorTarget::Energy(e) => e,
            AnchorTarget::Efficiency(eff) => ops_per_eval(self.n) / eff,
        }
    }
}

/// Published operating points of the conservative 55 nm design at 6 bits.
pub fn conservative_anchors() -> Vec<Anchor> {
    vec![
        Anchor { n: 10, target: AnchorTarget::Energy(5.44e-12), static_fraction: Some(0.65) },
        Anchor { n: 100, target: AnchorTarget::Efficiency(120e12), static_fraction: None },
        Anchor { n: 1000, target: AnchorTarget::Efficiency(150e12), static_fraction: None },
    ]
}

/// How far the fitted model lands from one calibration target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub n: usize,
    pub quantity: String,
    pub target: f64,
    pub model: f64,
    /// `(model - target) / target`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechParams {
    /// Time per precision step, s; the window is `T0 2^p`.
    pub t0: f64,
    pub tau_reset: f64,
    /// Dynamic energy per cell per evaluation, J.
    pub e_dyn_cell: f64,
    /// Dynamic energy per line per evaluation, J.
    pub e_dyn_line: f64,
    /// Static power of one neuron, W.
    pub p_static_neuron: f64,
    /// Shared-counter energy per count, J.
    pub e_counter_step: f64,
    /// Comparator-latch energy per input wire per bit, J.
    pub e_io_in: f64,
    /// Register energy per output wire per bit, J.
    pub e_io_out: f64,
    /// Area of one supercell, µm²; a weight takes two.
    pub a_cell: f64,
    /// Output capacitor area per summed input, µm².
    pub a_cap_per_input: f64,
    /// Neuron logic (latch, pass gates, rectifier), µm².
    pub a_neuron: f64,
    /// I/O conversion area per wire, µm².
    pub a_io: f64,
    /// Fit residuals of the anchors this preset was calibrated on.
    pub residuals: Vec<Residual>,
}

impl TechParams {
    /// Constants that are not fitted: timing, I/O and area of the
    /// conservative design. Energy terms are zero until calibrated.
    pub fn uncalibrated() -> Self {
        Self {
            t0: 0.5e-9,
            tau_reset: 1e-9,
            e_dyn_cell: 0.0,
            e_dyn_line: 0.0,
            p_static_neuron: 0.0,
            e_counter_step: 5.0 * FEMTO,
            e_io_in: 8.0 * FEMTO,
            e_io_out: 10.0 * FEMTO,
            a_cell: 1.0,
            a_cap_per_input: 6.0,
            a_neuron: 240.0,
            a_io: 20.0,
            residuals: Vec::new(),
        }
    }

    /// Conservative design calibrated on [`conservative_anchors`] at 6 bits.
    pub fn conservative() -> Self {
        calibrate(&conservative_anchors(), &Self::uncalibrated(), 6).expect("built-in anchors give a feasible fit")
    }

    /// Projection with the external capacitor removed: the column is
    /// loaded only by cell drain capacitance (`c_drain / c_per_input` of the
    /// conservative load), which shrinks the window and capacitor energy by
    /// the same factor.
    pub fn aggressive(c_drain: f64, c_per_input: f64) -> Self {
        let k = c_drain / c_per_input;
        let base = Self::conservative();
        Self {
            t0: base.t0 * k,
            tau_reset: base.tau_reset * k,
            e_dyn_cell: base.e_dyn_cell * k,
            a_cap_per_input: 0.0,
            residuals: Vec::new(),
            ..base
        }
    }

    fn check(&self) -> Result<()> {
        let values = [
            self.t0,
            self.tau_reset,
            self.e_dyn_cell,
            self.e_dyn_line,
            self.p_static_neuron,
            self.e_counter_step,
            self.e_io_in,
            self.e_io_out,
            self.a_cell,
            self.a_cap_per_input,
            self.a_neuron,
            self.a_io,
        ];
        if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Domain("technology constants must be finite and nonnegative".into()))
        }
    }
}

pub fn ops_per_eval(n: usize) -> f64 {
    2.0 * (n as f64).powi(2)
}

/// Input/output window length `T = T0 2^p`.
pub fn window(p: u32, tech: &TechParams) -> f64 {
    tech.t0 * 2f64.powi(p as i32)
}

/// Time per evaluation: both phases of the window, `2 T0 2^p`.
pub fn latency(p: u32, tech: &TechParams) -> f64 {
    2.0 * window(p, tech)
}

/// Time a neuron stays powered per evaluation.
fn active_time(p: u32, tech: &TechParams) -> f64 {
    latency(p, tech) + tech.tau_reset
}

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Relative-error least-squares fit of `e_dyn_cell`, `e_dyn_line` and
/// `p_static_neuron` to anchors measured at precision `p`. Each energy and
/// each known static share contributes one equation. Other constants are
/// copied from `base`.
pub fn calibrate(anchors: &[Anchor], base: &TechParams, p: u32) -> Result<TechParams> {
    if anchors.len() < 3 {
        return Err(Error::Calibration(format!("need at least 3 anchors, got {}", anchors.len())));
    }
    let on = active_time(p, base);
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for a in anchors {
        let e = a.energy();
        let n = a.n as f64;
        if !(e.is_finite() && e > 0.0) || a.n == 0 {
            return Err(Error::Calibration(format!("anchor at N = {} has no positive energy", a.n)));
        }
        rows.push([n * n / e, n / e, n * on / e]);
        if let Some(f) = a.static_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Calibration(format!("static fraction {f} at N = {} outside (0, 1)", a.n)));
            }
            rows.push([0.0, 0.0, n * on / (f * e)]);
        }
    }
    // Column scaling keeps the normal equations well conditioned.
    let scale: Vec<f64> = (0..3).map(|k| rows.iter().map(|r| r[k] * r[k]).sum::<f64>().sqrt()).collect();
    if scale.iter().any(|s| *s == 0.0) {
        return Err(Error::Calibration("anchors do not determine every energy term".into()));
    }
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut atb = vec![0.0; 3];
    for r in &rows {
        let z: Vec<f64> = (0..3).map(|k| r[k] / scale[k]).collect();
        for i in 0..3 {
            atb[i] += z[i];
            for j in 0..3 {
                ata[i][j] += z[i] * z[j];
            }
        }
    }
    let x = solve(ata, atb).ok_or_else(|| Error::Calibration("anchors are degenerate".into()))?;
    let mut tech = TechParams {
        e_dyn_cell: x[0] / scale[0],
        e_dyn_line: x[1] / scale[1],
        p_static_neuron: x[2] / scale[2],
        residuals: Vec::new(),
        ..base.clone()
    };
    for a in anchors {
        let report = estimate(a.n, p, &tech, false);
        let target = a.energy();
        tech.residuals.push(Residual {
            n: a.n,
            quantity: "energy".into(),
            target,
            model: report.energy_total,
            relative: (report.energy_total - target) / target,
        });
        if let Some(f) = a.static_fraction {
            let model = report.energy_static / report.energy_total;
            tech.residuals.push(Residual { n: a.n, quantity: "static_fraction".into(), target: f, model, relative: (model - f) / f });
        }
    }
    if [tech.e_dyn_cell, tech.e_dyn_line, tech.p_static_neuron].iter().any(|v| *v < 0.0) {
        let report: Vec<String> = tech
            .residuals
            .iter()
            .map(|r| format!("N={} {}: {:+.3}%", r.n, r.quantity, 100.0 * r.relative))
            .collect();
        return Err(Error::Calibration(format!(
            "fit needs negative constants (cell {:.3e} J, line {:.3e} J, static {:.3e} W); residuals {}",
            tech.e_dyn_cell,
            tech.e_dyn_line,
            tech.p_static_neuron,
            report.join(", ")
        )));
    }
    tech.check()?;
    Ok(tech)
}

/// Energy and added latency of converting between `p`-bit digital values
/// and time codes for an `N × N` VMM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoCost {
    /// Latency beyond the VMM window; the shared counter sweeps its codes
    /// while the window runs, so this is zero.
    pub latency: f64,
    pub energy: f64,
}

/// One shared `2^p`-step counter per evaluation plus a comparator-latch on
/// each input wire and a register on each output wire.
pub fn io_conversion(p: u32, n: usize, tech: &TechParams) -> IoCost {
    let codes = 2f64.powi(p as i32);
    let wires = n as f64 * p as f64 * (tech.e_io_in + tech.e_io_out);
    IoCost { latency: 0.0, energy: tech.e_counter_step * codes + wires }
}

/// Time of the rising edge of digital code `v`, relative to the window
/// start: `T (1 - v / (2^p - 1))`.
pub fn digital_to_time(v: u64, p: u32, window: f64) -> Result<f64> {
    if !(1..=32).contains(&p) {
        return Err(Error::Domain(format!("precision must lie in 1..=32 bits, got {p}")));
    }
    let top = (1u64 << p) - 1;
    if v > top {
        return Err(Error::Domain(format!("code {v} does not fit in {p} bits")));
    }
    Ok(window * (1.0 - v as f64 / top as f64))
}

/// Inverse of [`digital_to_time`], rounding to the nearest code.
pub fn time_to_digital(t: f64, p: u32, window: f64) -> Result<u64> {
    if !(1..=32).contains(&p) {
        return Err(Error::Domain(format!("precision must lie in 1..=32 bits, got {p}")));
    }
    if !(t.is_finite() && (0.0..=window).contains(&t)) {
        return Err(Error::Domain(format!("time {t} outside the input phase [0, {window}]")));
    }
    let top = ((1u64 << p) - 1) as f64;
    Ok(((1.0 - t / window) * top).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    /// Supercell array, µm².
    pub array: f64,
    /// Output capacitors of all neurons, µm².
    pub capacitor: f64,
    /// Neuron logic without capacitors, µm².
    pub neuron: f64,
    pub io: f64,
    pub total: f64,
}

impl AreaReport {
    /// Share of the array in array plus capacitor area.
    pub fn array_share(&self) -> f64 {
        self.array / (self.array + self.capacitor)
    }

    pub fn capacitor_share(&self) -> f64 {
        self.capacitor / (self.array + self.capacitor)
    }

    /// One neuron block (logic and its capacitor) relative to the array.
    pub fn neuron_block_to_array(&self, n: usize) -> f64 {
        (self.neuron + self.capacitor) / n as f64 / self.array
    }
}

/// Area of an `N × N` VMM; programming and erasure circuitry is excluded.
pub fn area_breakdown(n: usize, tech: &TechParams) -> AreaReport {
    let nf = n as f64;
    let array = 2.0 * nf * nf * tech.a_cell;
    let capacitor = nf * nf * tech.a_cap_per_input;
    let neuron = nf * tech.a_neuron;
    let io = 2.0 * nf * tech.a_io;
    AreaReport { array, capacitor, neuron, io, total: array + capacitor + neuron + io }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub n: usize,
    pub p: u32,
    pub latency: f64,
    pub energy_dynamic: f64,
    pub energy_static: f64,
    pub energy_io: f64,
    pub energy_total: f64,
    pub ops: f64,
    /// Ops/J.
    pub efficiency: f64,
    pub fj_per_op: f64,
    /// Share of the total energy spent on I/O conversion.
    pub io_fraction: f64,
    pub area: AreaReport,
}

pub fn estimate(n: usize, p: u32, tech: &TechParams, include_io: bool) -> PerfReport {
    let nf = n as f64;
    let energy_dynamic = tech.e_dyn_cell * nf * nf + tech.e_dyn_line * nf;
    let energy_static = tech.p_static_neuron * nf * active_time(p, tech);
    let io = io_conversion(p, n, tech);
    let energy_io = if include_io { io.energy } else { 0.0 };
    let energy_total = energy_dynamic + energy_static + energy_io;
    let ops = ops_per_eval(n);
    let mut area = area_breakdown(n, tech);
    if !include_io {
        area.total -= area.io;
        area.io = 0.0;
    }
    PerfReport {
        n,
        p,
        latency: latency(p, tech) + if include_io { io.latency } else { 0.0 },
        energy_dynamic,
        energy_static,
        energy_io,
        energy_total,
        ops,
        efficiency: ops / energy_total,
        fj_per_op: energy_total / ops / FEMTO,
        io_fraction: energy_io / energy_total,
        area,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::{DEFAULT_C_DRAIN, DEFAULT_C_PER_INPUT};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn latency_examples() {
        let tech = TechParams::uncalibrated();
        assert_relative_eq!(latency(6, &tech), 64e-9, max_relative = 1e-12);
        assert_relative_eq!(latency(1, &tech), 4.0 * tech.t0, max_relative = 1e-12);
        for p in 1..12 {
            assert_relative_eq!(latency(p + 1, &tech), 2.0 * latency(p, &tech), max_relative = 1e-12);
        }
    }

    #[test]
    fn synthetic_fit_round_trip() {
        let truth = TechParams { e_dyn_cell: 11e-15, e_dyn_line: 70e-15, p_static_neuron: 4e-6, ..TechParams::uncalibrated() };
        let anchors: Vec<Anchor> = [(10, true), (40, false), (300, false), (2000, true)]
            .iter()
            .map(|&(n, with_static)| {
                let r = estimate(n, 6, &truth, false);
                Anchor {
                    n,
                    target: AnchorTarget::Efficiency(r.efficiency),
                    static_fraction: with_static.then(|| r.energy_static / r.energy_total),
                }
            })
            .collect();
        let fit = calibrate(&anchors, &TechParams::uncalibrated(), 6).unwrap();
        assert_relative_eq!(fit.e_dyn_cell, truth.e_dyn_cell, max_relative = 1e-6);
        assert_relative_eq!(fit.e_dyn_line, truth.e_dyn_line, max_relative = 1e-6);
        assert_relative_eq!(fit.p_static_neuron, truth.p_static_neuron, max_relative = 1e-6);
        assert!(fit.residuals.iter().all(|r| r.relative.abs() < 1e-9));
    }

    #[test]
    fn infeasible_fit_reports_residuals() {
        // Energy independent of N needs a negative term somewhere.
        let anchors: Vec<Anchor> = [10, 100, 1000]
            .iter()
            .map(|&n| Anchor { n, target: AnchorTarget::Energy(1e-12), static_fraction: (n == 10).then_some(0.5) })
            .collect();
        match calibrate(&anchors, &TechParams::uncalibrated(), 6) {
            Err(Error::Calibration(msg)) => assert!(msg.contains("residuals")),
            other => panic!("expected a calibration error, got {other:?}"),
        }
        assert!(calibrate(&anchors[..2], &TechParams::uncalibrated(), 6).is_err());
    }

    #[test]
    fn conservative_anchors_are_reproduced() {
        let tech = TechParams::conservative();
        let small = estimate(10, 6, &tech, false);
        assert!((small.energy_total / 5.44e-12 - 1.0).abs() < 0.10);
        assert!((small.efficiency / 38.6e12 - 1.0).abs() < 0.10);
        assert!((small.energy_static / small.energy_total - 0.65).abs() < 0.05);
        assert!((estimate(100, 6, &tech, false).efficiency / 120e12 - 1.0).abs() < 0.10);
        assert!((estimate(1000, 6, &tech, false).efficiency / 150e12 - 1.0).abs() < 0.25);
        let io = estimate(250, 6, &tech, true);
        assert!(io.fj_per_op <= 7.0 * 1.3, "{} fJ/Op", io.fj_per_op);
    }

    #[test]
    fn report_components_add_up() {
        let tech = TechParams::conservative();
        for n in [1, 10, 77, 1000] {
            let r = estimate(n, 6, &tech, true);
            assert_relative_eq!(r.energy_total, r.energy_dynamic + r.energy_static + r.energy_io, max_relative = 1e-12);
            assert_relative_eq!(r.efficiency, r.ops / r.energy_total, max_relative = 1e-12);
            let a = r.area;
            assert_relative_eq!(a.total, a.array + a.capacitor + a.neuron + a.io, max_relative = 1e-12);
            assert!(r.energy_dynamic >= 0.0 && r.energy_static >= 0.0 && r.energy_io >= 0.0);
        }
    }

    #[test]
    fn efficiency_and_io_overhead_trends() {
        let tech = TechParams::conservative();
        let mut last_eff = 0.0;
        let mut last_io = f64::INFINITY;
        let mut last_io_per_op = f64::INFINITY;
        for n in (10..=1000).step_by(10) {
            let r = estimate(n, 6, &tech, false);
            assert!(r.efficiency >= last_eff);
            last_eff = r.efficiency;
            let with_io = estimate(n, 6, &tech, true);
            assert!(with_io.io_fraction < last_io);
            last_io = with_io.io_fraction;
            let per_op = with_io.energy_io / with_io.ops;
            assert!(per_op < last_io_per_op);
            last_io_per_op = per_op;
        }
        assert!(estimate(1000, 6, &tech, true).io_fraction < estimate(100, 6, &tech, true).io_fraction);
    }

    #[test]
    fn area_examples() {
        let tech = TechParams::conservative();
        for n in [200, 500, 1000] {
            let a = area_breakdown(n, &tech);
            assert!((a.capacitor_share() - 0.75).abs() <= 0.10);
            assert!((a.array_share() - 0.25).abs() <= 0.10);
        }
        let small = area_breakdown(10, &tech);
        assert!((small.neuron_block_to_array(10) / 1.5 - 1.0).abs() <= 0.20);
        let mut last = 0.0;
        for n in 1..300 {
            let total = area_breakdown(n, &tech).total;
            assert!(total > last);
            last = total;
        }
    }

    #[test]
    fn io_examples() {
        let tech = TechParams::conservative();
        assert_eq!(io_conversion(6, 100, &tech).latency, 0.0);
        let t = 32e-9;
        assert_eq!(digital_to_time(0, 6, t).unwrap(), t);
        assert_eq!(digital_to_time(63, 6, t).unwrap(), 0.0);
        assert!(digital_to_time(64, 6, t).is_err());
        assert!(time_to_digital(-1e-12, 6, t).is_err());
        for p in [4, 6, 8] {
            for v in 0..(1u64 << p) {
                assert_eq!(time_to_digital(digital_to_time(v, p, t).unwrap(), p, t).unwrap(), v);
            }
        }
    }

    #[test]
    fn aggressive_projection() {
        let tech = TechParams::aggressive(DEFAULT_C_DRAIN, DEFAULT_C_PER_INPUT);
        let r = estimate(1000, 6, &tech, false);
        assert!(r.latency < 2e-9, "latency {}", r.latency);
        assert!(r.fj_per_op < 1.0, "{} fJ/Op", r.fj_per_op);
        assert_eq!(r.area.capacitor, 0.0);
    }

    proptest! {
        #[test]
        fn code_round_trip(p in 1u32..=20, frac in 0.0f64..=1.0, t in 1e-9f64..1e-6) {
            let v = (frac * ((1u64 << p) - 1) as f64).floor() as u64;
            prop_assert_eq!(time_to_digital(digital_to_time(v, p, t).unwrap(), p, t).unwrap(), v);
        }
    }
}
