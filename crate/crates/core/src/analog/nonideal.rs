use super::{CircuitParams, ColumnDrive, ColumnTrace, DeviceModel};
use crate::error::{Error, Result};

/// Default local tolerance, relative to the drain swing.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_SHRINK: f64 = 0.2;
const MAX_GROWTH: f64 = 5.0;
/// Smallest step, as a fraction of `T`, before giving up.
const MIN_STEP_FRACTION: f64 = 1e-14;

/// One Dormand-Prince step of the autonomous scalar ODE `dv/dt = rate(v)`.
/// Returns the 5th-order value and the embedded error estimate.
fn dopri_step(v: f64, h: f64, rate: &impl Fn(f64) -> f64) -> (f64, f64) {
    let k1 = rate(v);
    let k2 = rate(v + h * A21 * k1);
    let k3 = rate(v + h * (A31 * k1 + A32 * k2));
    let k4 = rate(v + h * (A41 * k1 + A42 * k2 + A43 * k3));
    let k5 = rate(v + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
    let k6 = rate(v + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
    let next = v + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
    let k7 = rate(next);
    let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
    (next, err)
}

fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        MAX_GROWTH
    } else {
        (SAFETY * err.powf(-0.2)).clamp(MIN_SHRINK, MAX_GROWTH)
    }
}

/// Integrates `C dV_D/dt = -Σ_active I_k(V_D)` piecewise between gate
/// events and localizes the latch crossing by bisection.
///
/// `tolerance` bounds the local error relative to `ΔV_D`; the crossing is
/// bracketed to `tolerance · T`.
pub fn simulate_column_nonideal(
    drive: &ColumnDrive,
    params: &CircuitParams,
    model: &DeviceModel,
    tolerance: f64,
) -> Result<ColumnTrace> {
    if !(tolerance.is_finite() && tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::Domain(format!("solver tolerance must lie in (0, 1), got {tolerance}")));
    }
    let t_window = params.window();
    let c = params.capacitance;
    let v_th = params.v_th_latch;
    let v_thermal = params.v_thermal;
    let abs_tol = tolerance * params.delta_vd();
    let v_start = params.v_reset - params.charge_offset / c;

    let finish = |time: f64, v: f64, mut samples: Vec<(f64, f64)>| {
        samples.push((time, v));
        ColumnTrace {
            origin: drive.origin,
            samples,
            crossing_time: time,
            charge: c * (v_start - v) + params.charge_offset,
            saturated: false,
        }
    };

    let mut samples = vec![(0.0, v_start)];
    if v_start <= v_th {
        return Ok(finish(0.0, v_start, Vec::new()));
    }

    let mut v = v_start;
    let mut h = t_window / 8.0;
    let min_step = MIN_STEP_FRACTION * t_window;
    let breakpoints = drive.breakpoints(t_window);
    for pair in breakpoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a >= 2.0 * t_window {
            break;
        }
        let current = drive.active_current(a, b);
        if current <= 0.0 {
            continue;
        }
        let rate = |vd: f64| -current * model.current_factor(vd, v_thermal) / c;
        let mut t = a;
        while t < b {
            let step = h.min(b - t);
            let (next, err) = dopri_step(v, step, &rate);
            let scaled = err.abs() / abs_tol;
            if scaled > 1.0 {
                h = step * step_factor(scaled);
                if h < min_step {
                    return Err(Error::StepUnderflow { time: drive.origin + t });
                }
                continue;
            }
            if next <= v_th {
                // Bisect on the step length; each probe is a fresh step from `v`.
                let (mut lo, mut hi) = (0.0, step);
                let mut v_hi = next;
                while hi - lo > tolerance * t_window {
                    let mid = 0.5 * (lo + hi);
                    let (probe, _) = dopri_step(v, mid, &rate);
                    if probe <= v_th {
                        hi = mid;
                        v_hi = probe;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(finish(t + 0.5 * (lo + hi), v_hi, samples));
            }
            v = next;
            t = if b - (t + step) <= f64::EPSILON * b { b } else { t + step };
            samples.push((t, v));
            h = (step * step_factor(scaled)).max(min_step);
        }
    }
    Err(Error::NoCrossing { delivered: c * (v_start - v) + params.charge_offset, required: c * params.delta_vd() })
}
