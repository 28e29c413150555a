use super::{CircuitParams, ColumnDrive, ColumnTrace};
use crate::error::{Error, Result};

/// Relative charge slack accepted at the window end, covering rounding in
/// compiled currents that should cross exactly at `2T`.
const END_SLACK: f64 = 1e-12;

/// Exact event-driven solution for constant currents.
///
/// Between breakpoints the sunk charge grows linearly, so the crossing is
/// found in closed form inside the segment where the charge reaches
/// `C·ΔV_D`.
pub fn simulate_column_ideal(drive: &ColumnDrive, params: &CircuitParams) -> Result<ColumnTrace> {
    let t = params.window();
    let c = params.capacitance;
    let required = params.required_charge();
    let voltage = |q: f64| params.v_reset - q / c;

    let mut charge = 0.0;
    let mut samples = vec![(0.0, params.v_reset)];
    let finish = |time: f64, samples: &mut Vec<(f64, f64)>| {
        samples.push((time, params.v_th_latch));
        ColumnTrace {
            origin: drive.origin,
            samples: std::mem::take(samples),
            crossing_time: time,
            charge: required,
            saturated: false,
        }
    };

    if required <= 0.0 {
        return Ok(finish(0.0, &mut samples));
    }

    let breakpoints = drive.breakpoints(t);
    for pair in breakpoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a >= 2.0 * t {
            break;
        }
        let current = drive.active_current(a, b);
        let gained = current * (b - a);
        if current > 0.0 && charge + gained >= required {
            let crossing = (a + (required - charge) / current).clamp(a, b);
            return Ok(finish(crossing, &mut samples));
        }
        charge += gained;
        samples.push((b, voltage(charge)));
    }

    if required - charge <= END_SLACK * required {
        samples.pop();
        return Ok(finish(2.0 * t, &mut samples));
    }
    Err(Error::NoCrossing {
        delivered: charge + params.charge_offset,
        required: c * params.delta_vd(),
    })
}
