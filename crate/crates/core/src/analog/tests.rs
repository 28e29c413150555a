use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::compiler::{compile_array, decompose_four_quadrant, reduce_two_quadrant, WeightMatrix};
use crate::signal::{decode_output, differential_value, encode_value, EncodingMode};

const T: f64 = 32e-9;

fn params(n: usize) -> CircuitParams {
    let clock = ClockConfig::new(T, 1e-9, 0.5e-9).unwrap();
    CircuitParams::for_inputs(clock, n, DEFAULT_C_PER_INPUT, 0.7, 0.5).unwrap()
}

fn inputs(x: &[f64], p: &CircuitParams, mode: EncodingMode) -> Vec<TimeSignal> {
    x.iter().map(|&v| encode_value(v, &p.clock, mode, 0).unwrap()).collect()
}

fn decoded(run: &VmmRun, p: &CircuitParams) -> Vec<f64> {
    run.outputs
        .iter()
        .map(|s| decode_output(s, &p.clock, EncodingMode::RisingEdge, 0).unwrap())
        .collect()
}

/// Normalized dot product, computed element by element.
fn dot_oracle(w: &WeightMatrix, x: &[f64]) -> Vec<f64> {
    let n = w.rows() as f64;
    (0..w.cols())
        .map(|j| {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate() {
                acc += w.get(i, j) * xi;
            }
            acc / (n * w.w_max())
        })
        .collect()
}

fn single_column(w: &[f64], x: &[f64], mode: EncodingMode) -> (ColumnDrive, CircuitParams) {
    let p = params(w.len());
    let wm = WeightMatrix::new(w.len(), 1, w.to_vec(), 1.0).unwrap();
    let array = compile_array(&wm, &p.budget()).unwrap();
    let signals = inputs(x, &p, mode);
    let gates: Vec<&TimeSignal> = signals.iter().collect();
    let drive = ColumnDrive::from_signals(0.0, &array.column_currents(0), &gates, array.bias(0), T).unwrap();
    (drive, p)
}

#[test]
fn single_input_half_scale() {
    let (drive, p) = single_column(&[1.0], &[0.5], EncodingMode::RisingEdge);
    let trace = simulate_column_ideal(&drive, &p).unwrap();
    assert_relative_eq!(trace.crossing_time, 1.5 * T, max_relative = 1e-12);
}

#[test]
fn boundary_codes() {
    let n = 10;
    let (drive, p) = single_column(&vec![1.0; n], &vec![1.0; n], EncodingMode::RisingEdge);
    let trace = simulate_column_ideal(&drive, &p).unwrap();
    assert_relative_eq!(trace.crossing_time, T, max_relative = 1e-12);

    let (drive, p) = single_column(&vec![1.0; n], &vec![0.0; n], EncodingMode::RisingEdge);
    assert_relative_eq!(simulate_column_ideal(&drive, &p).unwrap().crossing_time, 2.0 * T, max_relative = 1e-12);

    let (drive, p) = single_column(&vec![0.0; n], &vec![1.0; n], EncodingMode::RisingEdge);
    assert_relative_eq!(simulate_column_ideal(&drive, &p).unwrap().crossing_time, 2.0 * T, max_relative = 1e-12);
}

#[test]
fn too_little_current_never_crosses() {
    let p = params(1);
    let signal = encode_value(0.0, &p.clock, EncodingMode::RisingEdge, 0).unwrap();
    let drive = ColumnDrive::from_signals(0.0, &[1e-9], &[&signal], 0.0, T).unwrap();
    assert!(matches!(simulate_column_ideal(&drive, &p), Err(Error::NoCrossing { .. })));
    assert!(matches!(
        simulate_column_nonideal(&drive, &p, &DeviceModel::dibl(0.1, 0.7).unwrap(), 1e-8),
        Err(Error::NoCrossing { .. })
    ));
}

#[test]
fn charge_offset_advances_crossing() {
    let (drive, mut p) = single_column(&[1.0], &[0.5], EncodingMode::RisingEdge);
    let i_max = p.budget().i_max(1).unwrap();
    p.charge_offset = i_max * 0.1 * T;
    let trace = simulate_column_ideal(&drive, &p).unwrap();
    assert_relative_eq!(trace.crossing_time, 1.4 * T, max_relative = 1e-12);
}

#[test]
fn pulse_position_in_phase_one_is_irrelevant() {
    let w = [0.7, 0.2, 0.9];
    let x = [0.3, 0.8, 0.55];
    let (right, p) = single_column(&w, &x, EncodingMode::PulseDuration);
    let mut left = right.clone();
    for (s, xi) in left.sources.iter_mut().zip(x) {
        s.on = vec![(0.0, xi * T), (T, 2.0 * T)];
    }
    let a = simulate_column_ideal(&right, &p).unwrap().crossing_time;
    let b = simulate_column_ideal(&left, &p).unwrap().crossing_time;
    assert_relative_eq!(a, b, max_relative = 1e-14);
}

#[test]
fn modes_agree_on_crossing() {
    let w = [0.4, 1.0, 0.1, 0.6];
    let x = [0.9, 0.05, 0.5, 0.33];
    let (edge, p) = single_column(&w, &x, EncodingMode::RisingEdge);
    let (duration, _) = single_column(&w, &x, EncodingMode::PulseDuration);
    let a = simulate_column_ideal(&edge, &p).unwrap().crossing_time;
    let b = simulate_column_ideal(&duration, &p).unwrap().crossing_time;
    assert_relative_eq!(a, b, max_relative = 1e-13);
}

#[test]
fn ideal_limit_of_nonideal_engine() {
    let w = [0.4, 1.0, 0.1, 0.6, 0.8];
    let x = [0.9, 0.05, 0.5, 0.33, 0.7];
    let (drive, mut p) = single_column(&w, &x, EncodingMode::RisingEdge);
    p.v_thermal = 1e-6;
    let model = DeviceModel::dibl(0.0, p.v_reset).unwrap();
    let ideal = simulate_column_ideal(&drive, &p).unwrap().crossing_time;
    let approx = simulate_column_nonideal(&drive, &p, &model, 1e-8).unwrap().crossing_time;
    assert_relative_eq!(approx, ideal, max_relative = 1e-6);
}

#[test]
fn end_of_window_current_ratio() {
    let p = params(1);
    let model = DeviceModel::dibl(0.101, p.v_reset).unwrap();
    let ratio = model.current_factor(p.v_th_latch, p.v_thermal) / model.current_factor(p.v_reset, p.v_thermal);
    assert!((ratio - 0.98).abs() < 5e-4, "ratio {ratio}");
}

/// Separable oracle: with every active source sharing the factor f(V), the
/// crossing happens when ∫ G dt reaches ∫_{V_TH}^{V_RESET} C / f(v) dv.
fn quadrature_crossing(drive: &ColumnDrive, p: &CircuitParams, model: &DeviceModel) -> f64 {
    let f = |v: f64| model.current_factor(v, p.v_thermal);
    let steps = 20_000;
    let (a, b) = (p.v_th_latch, p.v_reset);
    let h = (b - a) / steps as f64;
    let mut s = 1.0 / f(a) + 1.0 / f(b);
    for k in 1..steps {
        let v = a + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } / f(v);
    }
    let needed = p.capacitance * s * h / 3.0;

    let mut edges: Vec<f64> = vec![0.0, 2.0 * T];
    for src in &drive.sources {
        for &(on, off) in &src.on {
            edges.push(on);
            edges.push(off);
        }
    }
    edges.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for pair in edges.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let mid = 0.5 * (t0 + t1);
        let g: f64 = drive.bias
            + drive
                .sources
                .iter()
                .filter(|s| s.on.iter().any(|&(on, off)| on <= mid && mid < off))
                .map(|s| s.current)
                .sum::<f64>();
        if acc + g * (t1 - t0) >= needed {
            return t0 + (needed - acc) / g;
        }
        acc += g * (t1 - t0);
    }
    f64::INFINITY
}

#[test]
fn nonideal_matches_quadrature_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let n = rng.gen_range(1..12);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.0)).collect();
        let (drive, p) = single_column(&w, &x, EncodingMode::RisingEdge);
        let model = DeviceModel::dibl(0.101, 0.6).unwrap();
        let expected = quadrature_crossing(&drive, &p, &model);
        let got = simulate_column_nonideal(&drive, &p, &model, 1e-9).unwrap().crossing_time;
        assert!((got - expected).abs() <= 1e-7 * T, "got {got}, oracle {expected}");
    }
}

#[test]
fn nonideal_self_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tol = 1e-6;
    for _ in 0..20 {
        let n = rng.gen_range(1..16);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (drive, p) = single_column(&w, &x, EncodingMode::RisingEdge);
        let model = DeviceModel::dibl(0.101, 0.6).unwrap();
        let coarse = simulate_column_nonideal(&drive, &p, &model, tol).unwrap().crossing_time;
        let fine = simulate_column_nonideal(&drive, &p, &model, tol / 100.0).unwrap().crossing_time;
        assert!((coarse - fine).abs() <= 10.0 * tol * T);
    }
}

#[test]
fn nonideal_trace_is_monotone_and_conserves_charge() {
    let (drive, p) = single_column(&[0.3, 0.9, 0.6], &[0.2, 0.7, 1.0], EncodingMode::RisingEdge);
    let model = DeviceModel::dibl(0.2, 0.7).unwrap();
    let trace = simulate_column_nonideal(&drive, &p, &model, 1e-8).unwrap();
    assert!(trace.samples.windows(2).all(|s| s[1].1 <= s[0].1 && s[1].0 >= s[0].0));
    assert_relative_eq!(trace.charge, p.capacitance * p.delta_vd(), max_relative = 1e-6);
}

#[test]
fn run_vmm_independent_columns() {
    let p = params(1);
    let w = WeightMatrix::from_rows(&[vec![1.0, 0.0]], 1.0).unwrap();
    let array = compile_array(&w, &p.budget()).unwrap();
    let run = run_vmm(&inputs(&[1.0], &p, EncodingMode::RisingEdge), &array, &p, &VmmOptions::ideal()).unwrap();
    let y = decoded(&run, &p);
    assert_relative_eq!(y[0], 1.0, epsilon = 1e-12);
    assert_relative_eq!(y[1], 0.0, epsilon = 1e-12);
}

#[test]
fn run_vmm_rejects_dimension_mismatch() {
    let p = params(2);
    let w = WeightMatrix::zeros(2, 3, 1.0).unwrap();
    let array = compile_array(&w, &p.budget()).unwrap();
    let err = run_vmm(&inputs(&[0.5], &p, EncodingMode::RisingEdge), &array, &p, &VmmOptions::ideal()).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn run_vmm_aggregates_column_failures() {
    let p = params(1);
    let array = CurrentSourceArray::from_parts(1, 3, vec![1e-9, 1e-3, 1e-9], vec![0.0; 3], 1e-3, 1).unwrap();
    match run_vmm(&inputs(&[0.5], &p, EncodingMode::RisingEdge), &array, &p, &VmmOptions::ideal()) {
        Err(Error::Columns(failures)) => {
            let columns: Vec<usize> = failures.iter().map(|f| f.column).collect();
            assert_eq!(columns, vec![0, 2]);
        }
        other => panic!("expected column failures, got {other:?}"),
    }
    let saturating = VmmOptions { saturate: true, ..VmmOptions::ideal() };
    let run = run_vmm(&inputs(&[0.5], &p, EncodingMode::RisingEdge), &array, &p, &saturating).unwrap();
    assert!(run.traces[0].saturated && !run.traces[1].saturated);
    assert_eq!(decoded(&run, &p), vec![0.0, 1.0, 0.0]);
}

#[test]
fn random_ten_by_ten_matches_dot_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = params(10);
    for _ in 0..20 {
        let data: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..=2.0)).collect();
        let w = WeightMatrix::new(10, 10, data, 2.0).unwrap();
        let x: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let array = compile_array(&w, &p.budget()).unwrap();
        let run = run_vmm(&inputs(&x, &p, EncodingMode::RisingEdge), &array, &p, &VmmOptions::ideal()).unwrap();
        for (y, expected) in decoded(&run, &p).iter().zip(dot_oracle(&w, &x)) {
            assert!((y - expected).abs() <= 1e-9);
        }
    }
}

fn signed_inputs(x: &[f64], p: &CircuitParams) -> Vec<DifferentialSignal> {
    x.iter()
        .map(|&v| DifferentialSignal::encode(v, &p.clock, EncodingMode::RisingEdge, 0).unwrap())
        .collect()
}

fn differential(run: &QuadRun, p: &CircuitParams) -> Vec<f64> {
    run.outputs
        .iter()
        .map(|pair| differential_value(pair, &p.clock, EncodingMode::RisingEdge, 0).unwrap())
        .collect()
}

#[test]
fn four_quadrant_cancellation() {
    let p = params(2);
    let w = WeightMatrix::from_rows(&[vec![0.5], vec![-0.5]], 1.0).unwrap();
    let q = decompose_four_quadrant(&w, &p.budget()).unwrap();
    let run = run_vmm_quad(&signed_inputs(&[0.6, 0.6], &p), &q, &p, &VmmOptions::ideal()).unwrap();
    assert!(differential(&run, &p)[0].abs() < 1e-12);
}

#[test]
fn four_quadrant_negative_weight() {
    let p = params(1);
    let w = WeightMatrix::from_rows(&[vec![-0.5]], 1.0).unwrap();
    let q = decompose_four_quadrant(&w, &p.budget()).unwrap();
    for x in [-1.0, -0.4, 0.0, 0.3, 1.0] {
        let run = run_vmm_quad(&signed_inputs(&[x], &p), &q, &p, &VmmOptions::ideal()).unwrap();
        assert!((differential(&run, &p)[0] + 0.5 * x).abs() < 1e-12);
    }
}

#[test]
fn common_current_error_cancels_differentially() {
    let p = params(3);
    let w = WeightMatrix::from_rows(&[vec![0.5, -0.2], vec![-0.9, 0.4], vec![0.1, 1.0]], 1.0).unwrap();
    let q = decompose_four_quadrant(&w, &p.budget()).unwrap();
    let x = signed_inputs(&[0.2, 0.0, 0.0], &p);
    let nominal = differential(&run_vmm_quad(&x, &q, &p, &VmmOptions::ideal()).unwrap(), &p);
    // A common gain error shifts both wires of a pair by the same amount.
    let trimmed = VmmOptions {
        variations: Some(vec![ColumnVariation { latch_offset: 0.0, current_scale: 1.01 }; 2]),
        saturate: true,
        ..VmmOptions::ideal()
    };
    let scaled = differential(&run_vmm_quad(&x, &q, &p, &trimmed).unwrap(), &p);
    for (a, b) in nominal.iter().zip(&scaled) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ideal_engine_is_the_dot_product(n in 1usize..=64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let (drive, p) = single_column(&w, &x, EncodingMode::RisingEdge);
        let trace = simulate_column_ideal(&drive, &p).unwrap();
        prop_assert!(trace.crossing_time >= T * (1.0 - 1e-12) && trace.crossing_time <= 2.0 * T * (1.0 + 1e-12));
        let y = (2.0 * T - trace.crossing_time) / T;
        let expected: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        prop_assert!((y - expected).abs() <= 1e-9);

        // Charge each source delivered up to the crossing adds up to C·ΔV_D.
        let tc = trace.crossing_time;
        let delivered: f64 = drive.bias * tc
            + drive.sources.iter().map(|s| s.current * s.on.iter().map(|&(a, b)| (b.min(tc) - a).max(0.0)).sum::<f64>()).sum::<f64>();
        prop_assert!((delivered - p.capacitance * p.delta_vd()).abs() <= 1e-12 * p.capacitance * p.delta_vd());
    }

    #[test]
    fn nonideal_engine_is_monotone_in_inputs(seed in any::<u64>(), k in 0usize..8, bump in 0.01..0.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..=0.5)).collect();
        let mut raised = x.clone();
        raised[k] += bump;
        let model = DeviceModel::dibl(0.101, 0.6).unwrap();
        let (d0, p) = single_column(&w, &x, EncodingMode::RisingEdge);
        let (d1, _) = single_column(&w, &raised, EncodingMode::RisingEdge);
        let tol = 1e-8;
        let t0 = simulate_column_nonideal(&d0, &p, &model, tol);
        let t1 = simulate_column_nonideal(&d1, &p, &model, tol);
        if let (Ok(a), Ok(b)) = (&t0, &t1) {
            prop_assert!(b.crossing_time <= a.crossing_time + tol * T);
        } else {
            prop_assert!(t0.is_err() || t1.is_ok());
        }
    }

    #[test]
    fn two_quadrant_equals_four_quadrant_on_nonnegative_inputs(
        n in 1usize..8, m in 1usize..5, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let w = WeightMatrix::new(n, m, data, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let p = params(n);
        let four = decompose_four_quadrant(&w, &p.budget()).unwrap();
        let two = reduce_two_quadrant(&four);
        let xs = signed_inputs(&x, &p);
        let a = run_vmm_quad(&xs, &four, &p, &VmmOptions::ideal()).unwrap();
        let b = run_vmm_quad(&xs, &two, &p, &VmmOptions::ideal()).unwrap();
        let (da, db) = (differential(&a, &p), differential(&b, &p));
        let expected = dot_oracle(&w, &x);
        for j in 0..m {
            prop_assert!((da[j] - db[j]).abs() <= 1e-9);
            prop_assert!((db[j] - expected[j]).abs() <= 1e-9);
        }
    }

    #[test]
    fn swapping_input_wires_negates_output(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let w = WeightMatrix::new(n, 2, data, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let p = params(n);
        let q = decompose_four_quadrant(&w, &p.budget()).unwrap();
        let xs = signed_inputs(&x, &p);
        let swapped: Vec<DifferentialSignal> = xs.iter().map(DifferentialSignal::swapped).collect();
        let a = differential(&run_vmm_quad(&xs, &q, &p, &VmmOptions::ideal()).unwrap(), &p);
        let b = differential(&run_vmm_quad(&swapped, &q, &p, &VmmOptions::ideal()).unwrap(), &p);
        for j in 0..2 {
            prop_assert!((a[j] + b[j]).abs() <= 1e-9);
        }
    }
}
