//! Weight-to-current compilation.
//!
//! A column of normalized weights `w_i ∈ [0, w_max]` becomes programmed
//! currents `I_i` plus an always-on bias `I_0` such that the capacitor on the
//! column reaches its threshold at `T + (1 - y)·T` with
//! `y = Σ w_i x_i / (N w_max)`. The charge budget is `C·ΔV_D`: drain lines are
//! precharged and sunk down to the latch threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, RescaleViolation, Result};

/// Row-major `inputs × outputs` matrix of dimensionless weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    w_max: f64,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, w_max: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("weight matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} weights for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !(w_max.is_finite() && w_max > 0.0) {
            return Err(Error::Domain(format!("w_max must be positive, got {w_max}")));
        }
        if let Some(k) = data.iter().position(|w| !w.is_finite()) {
            return Err(Error::Domain(format!("weight ({}, {}) is not finite", k / cols, k % cols)));
        }
        Ok(Self { rows, cols, data, w_max })
    }

    pub fn from_rows(rows: &[Vec<f64>], w_max: f64) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged weight rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat(), w_max)
    }

    pub fn zeros(rows: usize, cols: usize, w_max: f64) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols], w_max)
    }

    /// Number of inputs `N`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of output columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&w| f(w)).collect(),
            w_max: self.w_max,
        }
    }

    /// Checks `0 <= w <= w_max` everywhere.
    pub fn check_single_quadrant(&self) -> Result<()> {
        self.check_range(0.0)
    }

    /// Checks `|w| <= w_max` everywhere.
    pub fn check_four_quadrant(&self) -> Result<()> {
        self.check_range(-self.w_max)
    }

    fn check_range(&self, min: f64) -> Result<()> {
        for (k, &w) in self.data.iter().enumerate() {
            if w < min || w > self.w_max {
                return Err(Error::WeightRange {
                    row: k / self.cols,
                    col: k % self.cols,
                    value: w,
                    min,
                    max: self.w_max,
                });
            }
        }
        Ok(())
    }
}

/// Capacitance, voltage swing and phase length that fix a column's charge
/// budget `C·V_swing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeBudget {
    /// Column capacitance, F.
    pub capacitance: f64,
    /// Drain-line swing `ΔV_D`, V.
    pub swing: f64,
    /// Phase length `T`, s.
    pub window: f64,
}

impl ChargeBudget {
    pub fn charge(&self) -> f64 {
        self.capacitance * self.swing
    }

    /// `I_max` for a column summing `inputs` sources.
    pub fn i_max(&self, inputs: usize) -> Result<f64> {
        compute_imax(self.capacitance, self.swing, inputs, self.window)
    }
}

/// Largest programmable current: with every input at full scale and every
/// source at `I_max`, the column must hit threshold exactly at `T`.
pub fn compute_imax(capacitance: f64, swing: f64, inputs: usize, window: f64) -> Result<f64> {
    for (name, v) in [("capacitance", capacitance), ("voltage swing", swing), ("window", window)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if inputs == 0 {
        return Err(Error::Domain("input count must be positive".into()));
    }
    Ok(capacitance * swing / (inputs as f64 * window))
}

/// Programmed currents of one column plus its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledColumn {
    pub currents: Vec<f64>,
    pub bias: f64,
}

/// Maps a column of weights in `[0, w_max]` to source currents and the bias
/// current that makes a zero dot product cross exactly at `2T`.
pub fn compile_column(weights: &[f64], w_max: f64, i_max: f64, budget: &ChargeBudget) -> Result<CompiledColumn> {
    let n = weights.len();
    let expected = budget.i_max(n)?;
    if !(i_max.is_finite() && i_max > 0.0) || ((i_max - expected) / expected).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "I_max = {i_max} A is inconsistent with the charge budget (expected {expected} A)"
        )));
    }
    if !(w_max.is_finite() && w_max > 0.0) {
        return Err(Error::Domain(format!("w_max must be positive, got {w_max}")));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(0.0..=w_max).contains(&w) {
            return Err(Error::WeightRange { row: i, col: 0, value: w, min: 0.0, max: w_max });
        }
    }
    let q = budget.charge();
    let sum: f64 = weights.iter().sum();
    let denominator = 2.0 * q * w_max - i_max * budget.window * sum;
    let currents: Vec<f64> = weights
        .iter()
        .map(|&w| (i_max * q * w / denominator).min(i_max))
        .collect();
    let bias = (0.5 * (n as f64 * i_max - currents.iter().sum::<f64>())).max(0.0);
    Ok(CompiledColumn { currents, bias })
}

/// Compiled single-quadrant array: one current per (input, column) cell and a
/// bias per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSourceArray {
    rows: usize,
    cols: usize,
    currents: Vec<f64>,
    bias: Vec<f64>,
    i_max: f64,
    summed: usize,
}

impl CurrentSourceArray {
    /// `summed` is the `N` of the column normalization; it differs from
    /// `rows` for differential wires, where only one of each input pair
    /// carries a source.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        currents: Vec<f64>,
        bias: Vec<f64>,
        i_max: f64,
        summed: usize,
    ) -> Result<Self> {
        if currents.len() != rows * cols || bias.len() != cols {
            return Err(Error::Dimension(format!(
                "array of {rows}x{cols} needs {} currents and {cols} biases",
                rows * cols
            )));
        }
        if !(i_max.is_finite() && i_max > 0.0) || summed == 0 {
            return Err(Error::Domain("I_max and the summed-input count must be positive".into()));
        }
        if let Some(k) = currents.iter().position(|&c| !(c.is_finite() && c >= 0.0)) {
            return Err(Error::Domain(format!("current ({}, {}) is negative or not finite", k / cols, k % cols)));
        }
        if let Some(j) = bias.iter().position(|&c| !(c.is_finite() && c >= 0.0)) {
            return Err(Error::Domain(format!("bias of column {j} is negative or not finite")));
        }
        Ok(Self { rows, cols, currents, bias, i_max, summed })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn i_max(&self) -> f64 {
        self.i_max
    }

    pub fn summed_inputs(&self) -> usize {
        self.summed
    }

    pub fn current(&self, row: usize, col: usize) -> f64 {
        self.currents[row * self.cols + col]
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn bias(&self, col: usize) -> f64 {
        self.bias[col]
    }

    pub fn biases(&self) -> &[f64] {
        &self.bias
    }

    pub fn column_currents(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.current(i, col)).collect()
    }

    /// `Σ I_i + 2 I_0 - N I_max` for one column; zero for a compiled array.
    pub fn charge_budget_residual(&self, col: usize) -> f64 {
        let sum: f64 = self.column_currents(col).iter().sum();
        sum + 2.0 * self.bias[col] - self.summed as f64 * self.i_max
    }

    /// Same array with every current (and bias) passed through `f`.
    pub fn map_currents(&self, mut cell: impl FnMut(usize, usize, f64) -> f64, mut bias: impl FnMut(usize, f64) -> f64) -> Self {
        let cols = self.cols;
        Self {
            currents: self
                .currents
                .iter()
                .enumerate()
                .map(|(k, &c)| cell(k / cols, k % cols, c))
                .collect(),
            bias: self.bias.iter().enumerate().map(|(j, &b)| bias(j, b)).collect(),
            ..self.clone()
        }
    }
}

/// Compiles every column of a single-quadrant matrix.
pub fn compile_array(weights: &WeightMatrix, budget: &ChargeBudget) -> Result<CurrentSourceArray> {
    weights.check_single_quadrant()?;
    let n = weights.rows();
    let i_max = budget.i_max(n)?;
    let mut currents = vec![0.0; n * weights.cols()];
    let mut bias = Vec::with_capacity(weights.cols());
    for j in 0..weights.cols() {
        let column = compile_column(&weights.column(j), weights.w_max(), i_max, budget)?;
        for (i, c) in column.currents.into_iter().enumerate() {
            currents[i * weights.cols() + j] = c;
        }
        bias.push(column.bias);
    }
    CurrentSourceArray::from_parts(n, weights.cols(), currents, bias, i_max, n)
}

/// Sign of a wire in a differential pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Plus,
    Minus,
}

/// Block of a four-quadrant array, labelled (output wire, input wire).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    /// `I⁺⁺`: positive input to positive output.
    PlusPlus,
    /// `I⁺⁻`: negative input to positive output.
    PlusMinus,
    /// `I⁻⁺`: positive input to negative output.
    MinusPlus,
    /// `I⁻⁻`: negative input to negative output.
    MinusMinus,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::PlusPlus,
        Quadrant::PlusMinus,
        Quadrant::MinusPlus,
        Quadrant::MinusMinus,
    ];

    pub fn output(self) -> Polarity {
        match self {
            Quadrant::PlusPlus | Quadrant::PlusMinus => Polarity::Plus,
            Quadrant::MinusPlus | Quadrant::MinusMinus => Polarity::Minus,
        }
    }

    pub fn input(self) -> Polarity {
        match self {
            Quadrant::PlusPlus | Quadrant::MinusPlus => Polarity::Plus,
            Quadrant::PlusMinus | Quadrant::MinusMinus => Polarity::Minus,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrant::PlusPlus => "++",
            Quadrant::PlusMinus => "+-",
            Quadrant::MinusPlus => "-+",
            Quadrant::MinusMinus => "--",
        }
    }
}

/// Which input wires are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputWires {
    /// Both wires of every input pair (four-quadrant).
    Differential,
    /// Positive wires only (two-quadrant, nonnegative inputs).
    PositiveOnly,
}

/// Four-quadrant array: four current blocks plus one bias per output wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadArray {
    inputs: usize,
    outputs: usize,
    i_max: f64,
    blocks: [Vec<f64>; 4],
    bias_plus: Vec<f64>,
    bias_minus: Vec<f64>,
    wires: InputWires,
}

impl QuadArray {
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn i_max(&self) -> f64 {
        self.i_max
    }

    pub fn input_wires(&self) -> InputWires {
        self.wires
    }

    /// Row-major `inputs × outputs` block, or `None` when its input wires
    /// have been removed.
    pub fn block(&self, quadrant: Quadrant) -> Option<&[f64]> {
        if self.wires == InputWires::PositiveOnly && quadrant.input() == Polarity::Minus {
            return None;
        }
        Some(&self.blocks[quadrant.index()])
    }

    pub fn current(&self, quadrant: Quadrant, input: usize, output: usize) -> f64 {
        self.block(quadrant).map_or(0.0, |b| b[input * self.outputs + output])
    }

    pub fn bias(&self, output: Polarity, col: usize) -> f64 {
        match output {
            Polarity::Plus => self.bias_plus[col],
            Polarity::Minus => self.bias_minus[col],
        }
    }

    /// The sources that sink into the `output` wire of every column, as a
    /// single-quadrant array whose rows are the positive input wires followed
    /// (in differential mode) by the negative ones.
    pub fn output_array(&self, output: Polarity) -> CurrentSourceArray {
        let (from_plus, from_minus) = match output {
            Polarity::Plus => (Quadrant::PlusPlus, Quadrant::PlusMinus),
            Polarity::Minus => (Quadrant::MinusPlus, Quadrant::MinusMinus),
        };
        let mut currents = self.blocks[from_plus.index()].clone();
        if self.wires == InputWires::Differential {
            currents.extend_from_slice(&self.blocks[from_minus.index()]);
        }
        let rows = currents.len() / self.outputs;
        let bias = match output {
            Polarity::Plus => self.bias_plus.clone(),
            Polarity::Minus => self.bias_minus.clone(),
        };
        CurrentSourceArray { rows, cols: self.outputs, currents, bias, i_max: self.i_max, summed: self.inputs }
    }

    /// Copy with every present cell and bias passed through the given maps,
    /// cells in [`Quadrant::ALL`] order and row-major within a block, then the
    /// positive-wire biases followed by the negative ones.
    pub fn map_currents(
        &self,
        mut cell: impl FnMut(Quadrant, usize, usize, f64) -> f64,
        mut bias: impl FnMut(Polarity, usize, f64) -> f64,
    ) -> Self {
        let mut out = self.clone();
        for q in Quadrant::ALL {
            if self.block(q).is_none() {
                continue;
            }
            for (k, c) in out.blocks[q.index()].iter_mut().enumerate() {
                *c = cell(q, k / self.outputs, k % self.outputs, *c);
            }
        }
        for (j, b) in out.bias_plus.iter_mut().enumerate() {
            *b = bias(Polarity::Plus, j, *b);
        }
        for (j, b) in out.bias_minus.iter_mut().enumerate() {
            *b = bias(Polarity::Minus, j, *b);
        }
        out
    }

    /// Normalized weights `|w| / w_max` recovered from the currents feeding
    /// the `output` wire of column `col`, one entry per input-wire row of
    /// [`output_array`](Self::output_array).
    fn recover_levels(&self, output: Polarity, col: usize) -> Vec<f64> {
        let array = self.output_array(output);
        let n = self.inputs as f64;
        let ratio: Vec<f64> = array.column_currents(col).iter().map(|c| c / self.i_max).collect();
        let r: f64 = ratio.iter().sum();
        // Σu follows from Σ I_i / I_max = U / (2 - U/N).
        let u_sum = 2.0 * r / (1.0 + r / n);
        ratio.iter().map(|x| x * (2.0 - u_sum / n)).collect()
    }
}

/// Splits a signed matrix into the four current blocks: a positive weight
/// programs `I⁺⁺ = I⁻⁻`, a negative one `I⁺⁻ = I⁻⁺`, both compiled from
/// `|w|`. Each output wire sees exactly one source per input, so every wire
/// is compiled as an `N`-input column with its own bias.
pub fn decompose_four_quadrant(weights: &WeightMatrix, budget: &ChargeBudget) -> Result<QuadArray> {
    weights.check_four_quadrant()?;
    let (n, m) = (weights.rows(), weights.cols());
    let i_max = budget.i_max(n)?;
    let mut blocks: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n * m]);
    let mut bias_plus = Vec::with_capacity(m);
    let mut bias_minus = Vec::with_capacity(m);
    for j in 0..m {
        let signed = weights.column(j);
        let magnitudes: Vec<f64> = signed.iter().map(|w| w.abs()).collect();
        let column = compile_column(&magnitudes, weights.w_max(), i_max, budget)?;
        for (i, (&w, &c)) in signed.iter().zip(&column.currents).enumerate() {
            let k = i * m + j;
            if w > 0.0 {
                blocks[Quadrant::PlusPlus.index()][k] = c;
                blocks[Quadrant::MinusMinus.index()][k] = c;
            } else if w < 0.0 {
                blocks[Quadrant::PlusMinus.index()][k] = c;
                blocks[Quadrant::MinusPlus.index()][k] = c;
            }
        }
        let wire_bias = |a: Quadrant, b: Quadrant| {
            let sum: f64 = (0..n).map(|i| blocks[a.index()][i * m + j] + blocks[b.index()][i * m + j]).sum();
            (0.5 * (n as f64 * i_max - sum)).max(0.0)
        };
        bias_plus.push(wire_bias(Quadrant::PlusPlus, Quadrant::PlusMinus));
        bias_minus.push(wire_bias(Quadrant::MinusPlus, Quadrant::MinusMinus));
    }
    Ok(QuadArray {
        inputs: n,
        outputs: m,
        i_max,
        blocks,
        bias_plus,
        bias_minus,
        wires: InputWires::Differential,
    })
}

/// Drops the negative input wires, for layers whose inputs are known to be
/// nonnegative. Each output wire is recompiled from the sources that remain
/// so the decoded outputs equal those of the full array driven with a zero
/// negative input.
pub fn reduce_two_quadrant(array: &QuadArray) -> QuadArray {
    if array.wires == InputWires::PositiveOnly {
        return array.clone();
    }
    let (n, m) = (array.inputs, array.outputs);
    let mut reduced = array.clone();
    reduced.wires = InputWires::PositiveOnly;
    for block in [Quadrant::PlusMinus, Quadrant::MinusMinus] {
        reduced.blocks[block.index()].iter_mut().for_each(|c| *c = 0.0);
    }
    for j in 0..m {
        for (output, kept) in [(Polarity::Plus, Quadrant::PlusPlus), (Polarity::Minus, Quadrant::MinusPlus)] {
            // Rows 0..n of the wire image are the positive input wires.
            let levels: Vec<f64> = array.recover_levels(output, j)[..n]
                .iter()
                .map(|u| u.clamp(0.0, 1.0))
                .collect();
            let sum: f64 = levels.iter().sum();
            let scale = array.i_max / (2.0 - sum / n as f64);
            let mut total = 0.0;
            for (i, u) in levels.iter().enumerate() {
                let c = (scale * u).min(array.i_max);
                reduced.blocks[kept.index()][i * m + j] = c;
                total += c;
            }
            let bias = (0.5 * (n as f64 * array.i_max - total)).max(0.0);
            match output {
                Polarity::Plus => reduced.bias_plus[j] = bias,
                Polarity::Minus => reduced.bias_minus[j] = bias,
            }
        }
    }
    reduced
}

/// Rounds every `|w| / w_max` to the nearest multiple of `1 / (2^bits - 1)`,
/// ties to even, keeping the sign.
pub fn quantize_weights(weights: &WeightMatrix, bits: u32) -> Result<WeightMatrix> {
    if !(1..=52).contains(&bits) {
        return Err(Error::Domain(format!("quantization bits must lie in 1..=52, got {bits}")));
    }
    let levels = ((1u64 << bits) - 1) as f64;
    let w_max = weights.w_max();
    Ok(weights.map(|w| {
        let code = (w.abs() / w_max * levels).round_ties_even();
        w.signum() * code / levels * w_max
    }))
}

/// Splits an activation slope over two consecutive layers as
/// `(√slope·W1, √slope·W2)`.
pub fn scale_for_slope(first: &WeightMatrix, second: &WeightMatrix, slope: f64) -> Result<(WeightMatrix, WeightMatrix)> {
    if !(slope.is_finite() && slope > 0.0) {
        return Err(Error::Domain(format!("slope must be positive, got {slope}")));
    }
    let factor = slope.sqrt();
    let scaled = [first.map(|w| w * factor), second.map(|w| w * factor)];
    let mut entries = Vec::new();
    for (matrix, w) in scaled.iter().enumerate() {
        for (k, &v) in w.as_slice().iter().enumerate() {
            if v.abs() > w.w_max() {
                entries.push(RescaleViolation { matrix, row: k / w.cols(), col: k % w.cols(), value: v });
            }
        }
    }
    if !entries.is_empty() {
        return Err(Error::Rescale { entries });
    }
    let [a, b] = scaled;
    Ok((a, b))
}
