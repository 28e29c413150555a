//! Time-encoded digital signals.
//!
//! A value in `[0, 1]` travels on a single wire either as the rising-edge time
//! of a pulse that stays high until the window closes, or as the duration of a
//! pulse inside the first phase of the window followed by a forced-high second
//! phase. Both forms keep the wire high for `(1 + x)·T` in total, so a current
//! source gated by the wire delivers the same charge either way.
//!
//! Every signal carries an `origin`, the absolute start of the window it was
//! produced for. Pulse edges are stored relative to that origin so the same
//! value yields bit-identical local edges in any window of a pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logic high level of the digital wires, in volts. Semantic only.
pub const V_ON: f64 = 1.2;
/// Logic low level, in volts. Semantic only.
pub const V_OFF: f64 = 0.0;

/// Default time quantum used for edge comparisons (1 ps).
pub const DEFAULT_QUANTUM: f64 = 1e-12;

/// Upper bound on the latch plus rectifier delay as a fraction of `T`.
pub const MAX_TAU_F_FRACTION: f64 = 1.0 / 16.0;

/// Window timing shared by every wire of a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockConfig {
    window: f64,
    tau_reset: f64,
    tau_f: f64,
    quantum: f64,
}

impl ClockConfig {
    /// `window` is the phase length `T`; all arguments in seconds.
    pub fn new(window: f64, tau_reset: f64, tau_f: f64) -> Result<Self> {
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::Domain(format!("phase length T must be positive, got {window}")));
        }
        if !(tau_reset.is_finite() && tau_reset >= 0.0) {
            return Err(Error::Domain(format!("tau_reset must be nonnegative, got {tau_reset}")));
        }
        if !(tau_f.is_finite() && tau_f >= 0.0 && tau_f < window * MAX_TAU_F_FRACTION) {
            return Err(Error::Domain(format!(
                "tau_f must lie in [0, T/16), got {tau_f} with T = {window}"
            )));
        }
        Ok(Self {
            window,
            tau_reset,
            tau_f,
            quantum: DEFAULT_QUANTUM.min(window * 1e-3),
        })
    }

    pub fn with_quantum(mut self, quantum: f64) -> Result<Self> {
        if !(quantum.is_finite() && quantum > 0.0 && quantum < self.window) {
            return Err(Error::Domain(format!("time quantum must lie in (0, T), got {quantum}")));
        }
        self.quantum = quantum;
        Ok(self)
    }

    /// Phase length `T`.
    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn tau_reset(&self) -> f64 {
        self.tau_reset
    }

    pub fn tau_f(&self) -> f64 {
        self.tau_f
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    /// Pipeline period `2T + tau_reset`.
    pub fn period(&self) -> f64 {
        2.0 * self.window + self.tau_reset
    }

    /// Absolute start of window `index`. The precharge for the next window
    /// occupies the `tau_reset` tail of each period.
    pub fn window_start(&self, index: u64) -> f64 {
        index as f64 * self.period()
    }

    /// Absolute `[start, end]` of a phase inside window `index`.
    pub fn phase_bounds(&self, index: u64, phase: Phase) -> (f64, f64) {
        let start = self.window_start(index) + phase.offset(self.window);
        (start, start + self.window)
    }
}

/// How a value is carried on a wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    RisingEdge,
    PulseDuration,
}

/// Which `T`-long slot of a window holds the value: inputs are read in
/// `[0, T]`, outputs in `[T, 2T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Input,
    Output,
}

impl Phase {
    fn offset(self, window: f64) -> f64 {
        match self {
            Phase::Input => 0.0,
            Phase::Output => window,
        }
    }
}

/// One high interval, `rise < fall`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub rise: f64,
    pub fall: f64,
}

impl Pulse {
    pub fn duration(&self) -> f64 {
        self.fall - self.rise
    }

    fn overlap(&self, start: f64, end: f64) -> f64 {
        (self.fall.min(end) - self.rise.max(start)).max(0.0)
    }
}

/// A digital waveform on one wire: ordered, non-overlapping high pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    origin: f64,
    pulses: Vec<Pulse>,
}

impl TimeSignal {
    /// Builds a signal from absolute `(rise, fall)` pairs.
    pub fn from_absolute(pulses: &[(f64, f64)]) -> Result<Self> {
        Self::in_window(0.0, pulses)
    }

    /// Builds a signal whose `(rise, fall)` pairs are offsets from `origin`.
    pub fn in_window(origin: f64, pulses: &[(f64, f64)]) -> Result<Self> {
        if !(origin.is_finite() && origin >= 0.0) {
            return Err(Error::Domain(format!("signal origin must be >= 0, got {origin}")));
        }
        let pulses: Vec<Pulse> = pulses.iter().map(|&(rise, fall)| Pulse { rise, fall }).collect();
        let mut previous_fall = f64::NEG_INFINITY;
        for (k, p) in pulses.iter().enumerate() {
            if !(p.rise.is_finite() && p.fall.is_finite()) || p.rise < 0.0 {
                return Err(Error::Domain(format!("pulse {k} has invalid edges ({}, {})", p.rise, p.fall)));
            }
            if p.rise >= p.fall {
                return Err(Error::Domain(format!("pulse {k} does not rise before it falls")));
            }
            if p.rise < previous_fall {
                return Err(Error::Domain(format!("pulse {k} overlaps or precedes pulse {}", k - 1)));
            }
            previous_fall = p.fall;
        }
        Ok(Self { origin, pulses })
    }

    /// A wire that stays low.
    pub fn silent(origin: f64) -> Self {
        Self { origin, pulses: Vec::new() }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Pulse edges relative to [`origin`](Self::origin).
    pub fn local_pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    /// Pulse edges in absolute time.
    pub fn pulses(&self) -> impl Iterator<Item = Pulse> + '_ {
        self.pulses.iter().map(move |p| Pulse {
            rise: self.origin + p.rise,
            fall: self.origin + p.fall,
        })
    }

    pub fn is_silent(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Same waveform re-expressed against another origin.
    pub fn rebased(&self, origin: f64) -> Self {
        if origin == self.origin {
            return self.clone();
        }
        let shift = self.origin - origin;
        Self {
            origin,
            pulses: self
                .pulses
                .iter()
                .map(|p| Pulse { rise: p.rise + shift, fall: p.fall + shift })
                .collect(),
        }
    }

    /// High time inside a local interval.
    pub fn local_on_time(&self, start: f64, end: f64) -> f64 {
        self.pulses.iter().map(|p| p.overlap(start, end)).sum()
    }
}

/// Total high time of `signal` inside the absolute interval `[start, end]`.
pub fn on_time(signal: &TimeSignal, interval: (f64, f64)) -> f64 {
    let (start, end) = interval;
    if end <= start {
        return 0.0;
    }
    signal.local_on_time(start - signal.origin, end - signal.origin)
}

/// Encodes `x` into the input phase of window `window_index`.
pub fn encode_value(x: f64, clock: &ClockConfig, mode: EncodingMode, window_index: u64) -> Result<TimeSignal> {
    encode_in_phase(x, clock, mode, window_index, Phase::Input)
}

/// Encodes `x` as an output: the value sits in `[T, 2T]` and the wire
/// stays high through `3T`.
pub fn encode_output(x: f64, clock: &ClockConfig, mode: EncodingMode, window_index: u64) -> Result<TimeSignal> {
    encode_in_phase(x, clock, mode, window_index, Phase::Output)
}

pub fn encode_in_phase(
    x: f64,
    clock: &ClockConfig,
    mode: EncodingMode,
    window_index: u64,
    phase: Phase,
) -> Result<TimeSignal> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("normalized value must lie in [0, 1], got {x}")));
    }
    let t = clock.window();
    let start = phase.offset(t);
    let end = start + t;
    let origin = clock.window_start(window_index);
    match mode {
        EncodingMode::RisingEdge => TimeSignal::in_window(origin, &[(start + (1.0 - x) * t, end + t)]),
        EncodingMode::PulseDuration => {
            if x > 0.0 {
                TimeSignal::in_window(origin, &[(end - x * t, end), (end, end + t)])
            } else {
                TimeSignal::in_window(origin, &[(end, end + t)])
            }
        }
    }
}

/// Decodes the value held in the output phase `[T, 2T]` of a window.
pub fn decode_output(signal: &TimeSignal, clock: &ClockConfig, mode: EncodingMode, window_index: u64) -> Result<f64> {
    decode_in_phase(signal, clock, mode, window_index, Phase::Output)
}

/// Decodes the value held in the input phase `[0, T]` of a window.
pub fn decode_input(signal: &TimeSignal, clock: &ClockConfig, mode: EncodingMode, window_index: u64) -> Result<f64> {
    decode_in_phase(signal, clock, mode, window_index, Phase::Input)
}

pub fn decode_in_phase(
    signal: &TimeSignal,
    clock: &ClockConfig,
    mode: EncodingMode,
    window_index: u64,
    phase: Phase,
) -> Result<f64> {
    let t = clock.window();
    let q = clock.quantum();
    let local = signal.rebased(clock.window_start(window_index));
    let start = phase.offset(t);
    let end = start + t;
    match mode {
        EncodingMode::RisingEdge => {
            let pulse = local
                .local_pulses()
                .iter()
                .find(|p| p.fall > start + q)
                .ok_or_else(|| Error::Decode(format!("no rising edge in window {window_index}")))?;
            if pulse.rise < start - q {
                return Err(Error::Decode(format!(
                    "wire already high {:.3e} s before the phase opens",
                    start - pulse.rise
                )));
            }
            if pulse.rise > end + q {
                return Err(Error::Decode(format!("no rising edge in window {window_index}")));
            }
            if pulse.fall < end - q {
                return Err(Error::Decode("wire falls before the phase closes".into()));
            }
            Ok(((end - pulse.rise) / t).clamp(0.0, 1.0))
        }
        EncodingMode::PulseDuration => {
            let held = local.local_on_time(end, end + t);
            if held < t - q {
                return Err(Error::Decode(format!(
                    "wire not held high for the phase following window {window_index}'s value slot"
                )));
            }
            Ok((local.local_on_time(start, end) / t).clamp(0.0, 1.0))
        }
    }
}

/// A value carried on a positive and a negative wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSignal {
    pub plus: TimeSignal,
    pub minus: TimeSignal,
}

impl DifferentialSignal {
    pub fn new(plus: TimeSignal, minus: TimeSignal) -> Self {
        Self { plus, minus }
    }

    /// Splits a signed value over the two wires: the positive part on
    /// `plus`, the magnitude of the negative part on `minus`.
    pub fn encode(x: f64, clock: &ClockConfig, mode: EncodingMode, window_index: u64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("signed value must lie in [-1, 1], got {x}")));
        }
        Ok(Self {
            plus: encode_value(x.max(0.0), clock, mode, window_index)?,
            minus: encode_value((-x).max(0.0), clock, mode, window_index)?,
        })
    }

    pub fn swapped(&self) -> Self {
        Self { plus: self.minus.clone(), minus: self.plus.clone() }
    }
}

/// `decode(plus) - decode(minus)` in the output phase, i.e.
/// `(t_minus - t_plus) / T`.
pub fn differential_value(
    pair: &DifferentialSignal,
    clock: &ClockConfig,
    mode: EncodingMode,
    window_index: u64,
) -> Result<f64> {
    let plus = decode_output(&pair.plus, clock, mode, window_index)?;
    let minus = decode_output(&pair.minus, clock, mode, window_index)?;
    Ok(plus - minus)
}
