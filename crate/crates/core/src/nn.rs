//! Dense layers, activations, an LSTM cell and flat parameter vectors.
//!
//! Weights are stored input-major: the `out_dim` weights fed by input `j`
//! are contiguous. The forward pass then accumulates one column at a time,
//! which vectorizes without reassociating any per-output sum.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    /// `weight[j * out_dim + i]` multiplies input `j` into output `i`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Builds a layer from a row-major `[out_dim][in_dim]` matrix.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let out_dim = rows.len();
        if bias.len() != out_dim {
            return Err(Error::dim("dense bias", out_dim, bias.len()));
        }
        let in_dim = rows.first().map_or(0, Vec::len);
        let mut layer = DenseLayer::zeros(in_dim, out_dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != in_dim {
                return Err(Error::dim("dense row", in_dim, row.len()));
            }
            for (j, &w) in row.iter().enumerate() {
                layer.set_weight(i, j, w);
            }
        }
        layer.bias = bias;
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weight[input * self.out_dim + out]
    }

    pub fn set_weight(&mut self, out: usize, input: usize, value: f64) {
        self.weight[input * self.out_dim + out] = value;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights fed by input `j`, one per output.
    pub fn column(&self, input: usize) -> &[f64] {
        &self.weight[input * self.out_dim..(input + 1) * self.out_dim]
    }

    /// `weight · x + bias`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::dim("dense input", self.in_dim, x.len()));
        }
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant writing into `out`; lengths must already agree.
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        out.fill(0.0);
        accumulate_columns(&self.weight, self.out_dim, x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    fn write_params(&self, dst: &mut Vec<f64>) {
        dst.extend_from_slice(&self.weight);
        dst.extend_from_slice(&self.bias);
    }

    fn read_params(&mut self, src: &[f64]) {
        let (w, b) = src.split_at(self.weight.len());
        self.weight.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }
}

/// `out += Σ_j columns[j] * x[j]`, skipping zero inputs.
pub(crate) fn accumulate_columns(columns: &[f64], width: usize, x: &[f64], out: &mut [f64]) {
    // Four columns per pass over `out`, each output still summed in column order.
    let out = &mut out[..width];
    let mut block: [(&[f64], f64); 4] = [(&[], 0.0); 4];
    let mut filled = 0;
    for (col, &xj) in columns.chunks_exact(width).zip(x) {
        if xj == 0.0 {
            continue;
        }
        block[filled] = (col, xj);
        filled += 1;
        if filled == 4 {
            let [(c0, x0), (c1, x1), (c2, x2), (c3, x3)] = block;
            let (c0, c1, c2, c3) = (&c0[..width], &c1[..width], &c2[..width], &c3[..width]);
            for k in 0..width {
                let mut o = out[k];
                o += c0[k] * x0;
                o += c1[k] * x1;
                o += c2[k] * x2;
                o += c3[k] * x3;
                out[k] = o;
            }
            filled = 0;
        }
    }
    for &(col, xj) in &block[..filled] {
        for (o, &w) in out.iter_mut().zip(col) {
            *o += w * xj;
        }
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Max-subtracted softmax. Returns an empty vector for empty input.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Gate blocks are laid out in the order input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    in_dim: usize,
    hidden_dim: usize,
    /// Input-major, `4 * hidden_dim` gate pre-activations per input.
    w_input: Vec<f64>,
    /// Hidden-major, `4 * hidden_dim` gate pre-activations per hidden unit.
    w_hidden: Vec<f64>,
    bias: Vec<f64>,
}

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CANDIDATE: usize = 2;
pub const GATE_OUTPUT: usize = 3;

impl LstmCell {
    pub fn zeros(in_dim: usize, hidden_dim: usize) -> Self {
        let g = 4 * hidden_dim;
        LstmCell {
            in_dim,
            hidden_dim,
            w_input: vec![0.0; in_dim * g],
            w_hidden: vec![0.0; hidden_dim * g],
            bias: vec![0.0; g],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_dim * (self.in_dim + self.hidden_dim + 1)
    }

    /// Weight from input `j` into unit `k` of `gate`.
    pub fn input_weight(&self, gate: usize, unit: usize, input: usize) -> f64 {
        self.w_input[input * 4 * self.hidden_dim + gate * self.hidden_dim + unit]
    }

    pub fn hidden_weight(&self, gate: usize, unit: usize, from: usize) -> f64 {
        self.w_hidden[from * 4 * self.hidden_dim + gate * self.hidden_dim + unit]
    }

    pub fn gate_bias(&self, gate: usize, unit: usize) -> f64 {
        self.bias[gate * self.hidden_dim + unit]
    }

    pub(crate) fn input_columns(&self) -> &[f64] {
        &self.w_input
    }

    pub(crate) fn hidden_columns(&self) -> &[f64] {
        &self.w_hidden
    }

    pub(crate) fn biases(&self) -> &[f64] {
        &self.bias
    }

    pub fn step(&self, x: &[f64], state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
        if x.len() != self.in_dim {
            return Err(Error::dim("lstm input", self.in_dim, x.len()));
        }
        if state.h.len() != self.hidden_dim || state.c.len() != self.hidden_dim {
            return Err(Error::dim(
                "lstm state",
                self.hidden_dim,
                state.h.len().max(state.c.len()),
            ));
        }
        let mut gates = self.bias.clone();
        accumulate_columns(&self.w_input, 4 * self.hidden_dim, x, &mut gates);
        accumulate_columns(&self.w_hidden, 4 * self.hidden_dim, &state.h, &mut gates);
        let mut next = state.clone();
        apply_gates(&gates, &mut next);
        Ok((next.h.clone(), next))
    }

    fn write_params(&self, dst: &mut Vec<f64>) {
        dst.extend_from_slice(&self.w_input);
        dst.extend_from_slice(&self.w_hidden);
        dst.extend_from_slice(&self.bias);
    }

    fn read_params(&mut self, src: &[f64]) {
        let (wi, rest) = src.split_at(self.w_input.len());
        let (wh, b) = rest.split_at(self.w_hidden.len());
        self.w_input.copy_from_slice(wi);
        self.w_hidden.copy_from_slice(wh);
        self.bias.copy_from_slice(b);
    }
}

/// Updates `state` in place from gate pre-activations.
pub(crate) fn apply_gates(gates: &[f64], state: &mut LstmState) {
    let h = state.h.len();
    let (i_gate, rest) = gates.split_at(h);
    let (f_gate, rest) = rest.split_at(h);
    let (g_gate, o_gate) = rest.split_at(h);
    for k in 0..h {
        let i = sigmoid_scalar(i_gate[k]);
        let f = sigmoid_scalar(f_gate[k]);
        let g = g_gate[k].tanh();
        let o = sigmoid_scalar(o_gate[k]);
        state.c[k] = f * state.c[k] + i * g;
        state.h[k] = o * state.c[k].tanh();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Dense { in_dim: usize, out_dim: usize },
    Lstm { in_dim: usize, hidden_dim: usize },
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerShape::Dense { in_dim, out_dim } => out_dim * (in_dim + 1),
            LayerShape::Lstm { in_dim, hidden_dim } => 4 * hidden_dim * (in_dim + hidden_dim + 1),
        }
    }

    fn zeros(&self) -> Layer {
        match *self {
            LayerShape::Dense { in_dim, out_dim } => Layer::Dense(DenseLayer::zeros(in_dim, out_dim)),
            LayerShape::Lstm { in_dim, hidden_dim } => Layer::Lstm(LstmCell::zeros(in_dim, hidden_dim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Lstm(LstmCell),
}

impl Layer {
    pub fn shape(&self) -> LayerShape {
        match self {
            Layer::Dense(d) => LayerShape::Dense {
                in_dim: d.in_dim,
                out_dim: d.out_dim,
            },
            Layer::Lstm(l) => LayerShape::Lstm {
                in_dim: l.in_dim,
                hidden_dim: l.hidden_dim,
            },
        }
    }

    pub fn param_count(&self) -> usize {
        self.shape().param_count()
    }

    fn write_params(&self, dst: &mut Vec<f64>) {
        match self {
            Layer::Dense(d) => d.write_params(dst),
            Layer::Lstm(l) => l.write_params(dst),
        }
    }

    fn read_params(&mut self, src: &[f64]) {
        match self {
            Layer::Dense(d) => d.read_params(src),
            Layer::Lstm(l) => l.read_params(src),
        }
    }
}

/// Parameter initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Every entry i.i.d. `Normal(0, std²)`.
    Normal { std: f64 },
    /// Every entry i.i.d. `U(−b, b)` with `b = 1/√fan_in`; LSTM entries use
    /// the hidden size as fan-in.
    FanInUniform,
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Normal { std } => write!(f, "normal:{std}"),
            Init::FanInUniform => f.write_str("fan_in"),
        }
    }
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "fan_in" {
            return Ok(Init::FanInUniform);
        }
        let std = s
            .strip_prefix("normal:")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Config(format!("unknown init `{s}`, expected `fan_in` or `normal:<std>`")))?;
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::Config(format!("init std must be positive, got {std}")));
        }
        Ok(Init::Normal { std })
    }
}

/// Named, ordered list of layer shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    layers: Vec<(String, LayerShape)>,
}

impl Architecture {
    pub fn new() -> Self {
        Architecture { layers: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: LayerShape) -> &mut Self {
        self.layers.push((name.into(), shape));
        self
    }

    pub fn layers(&self) -> &[(String, LayerShape)] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|(_, s)| s.param_count()).sum()
    }

    pub fn layout(&self) -> Vec<SliceDesc> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|(name, shape)| {
                let len = shape.param_count();
                let desc = SliceDesc {
                    name: name.clone(),
                    offset,
                    len,
                };
                offset += len;
                desc
            })
            .collect()
    }

    /// Draws a parameter vector according to `init`.
    pub fn init<R: Rng + ?Sized>(&self, init: Init, rng: &mut R) -> Result<ParamVec> {
        match init {
            Init::Normal { std } => self.init_normal(std, rng),
            Init::FanInUniform => {
                let mut values = Vec::with_capacity(self.param_count());
                for (_, shape) in &self.layers {
                    let fan = match *shape {
                        LayerShape::Dense { in_dim, .. } => in_dim,
                        LayerShape::Lstm { hidden_dim, .. } => hidden_dim,
                    };
                    let bound = 1.0 / (fan.max(1) as f64).sqrt();
                    values.extend((0..shape.param_count()).map(|_| rng.random_range(-bound..bound)));
                }
                Ok(ParamVec {
                    values,
                    layout: self.layout(),
                })
            }
        }
    }

    /// Parameter vector with every entry drawn from `Normal(0, std²)`.
    pub fn init_normal<R: Rng + ?Sized>(&self, std: f64, rng: &mut R) -> Result<ParamVec> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("init std: {e}")))?;
        let values = (0..self.param_count()).map(|_| normal.sample(rng)).collect();
        Ok(ParamVec {
            values,
            layout: self.layout(),
        })
    }

    pub fn zeros(&self) -> ParamVec {
        ParamVec {
            values: vec![0.0; self.param_count()],
            layout: self.layout(),
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceDesc {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter vector: all weights and biases of every layer, concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    pub values: Vec<f64>,
    pub layout: Vec<SliceDesc>,
}

impl ParamVec {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|d| d.name == name)
            .map(|d| &self.values[d.offset..d.offset + d.len])
    }
}

pub fn flatten(layers: &[(String, Layer)]) -> ParamVec {
    let mut values = Vec::with_capacity(layers.iter().map(|(_, l)| l.param_count()).sum());
    let mut layout = Vec::with_capacity(layers.len());
    for (name, layer) in layers {
        let offset = values.len();
        layer.write_params(&mut values);
        layout.push(SliceDesc {
            name: name.clone(),
            offset,
            len: values.len() - offset,
        });
    }
    ParamVec { values, layout }
}

/// Rebuilds layers of `arch` from a flat vector.
pub fn unflatten(params: &[f64], arch: &Architecture) -> Result<Vec<(String, Layer)>> {
    let expected = arch.param_count();
    if params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "parameter vector has {} values, architecture needs {expected}",
            params.len()
        )));
    }
    let mut offset = 0;
    Ok(arch
        .layers()
        .iter()
        .map(|(name, shape)| {
            let mut layer = shape.zeros();
            let n = shape.param_count();
            layer.read_params(&params[offset..offset + n]);
            offset += n;
            (name.clone(), layer)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    /// Scalar-loop LSTM written directly from the recurrence, indexing weights
    /// through the public accessors only.
    fn reference_lstm_step(cell: &LstmCell, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = cell.hidden_dim();
        let pre = |gate: usize, k: usize| {
            let mut s = cell.gate_bias(gate, k);
            for (j, xj) in x.iter().enumerate() {
                s += cell.input_weight(gate, k, j) * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                s += cell.hidden_weight(gate, k, j) * hj;
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h2 = vec![0.0; hd];
        let mut c2 = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(GATE_INPUT, k));
            let f = sig(pre(GATE_FORGET, k));
            let g = pre(GATE_CANDIDATE, k).tanh();
            let o = sig(pre(GATE_OUTPUT, k));
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        (h2, c2)
    }

    fn random_cell(in_dim: usize, hidden: usize, seed: u64) -> LstmCell {
        let mut arch = Architecture::new();
        arch.push(
            "lstm",
            LayerShape::Lstm {
                in_dim,
                hidden_dim: hidden,
            },
        );
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let p = arch.init_normal(0.5, &mut rng).unwrap();
        match unflatten(&p.values, &arch).unwrap().remove(0).1 {
            Layer::Lstm(l) => l,
            Layer::Dense(_) => unreachable!(),
        }
    }

    #[test]
    fn dense_zero_weights_return_bias() {
        let mut layer = DenseLayer::zeros(3, 2);
        layer.bias_mut().copy_from_slice(&[0.5, -1.5]);
        assert_eq!(layer.forward(&[4.0, -2.0, 9.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn dense_identity() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let layer = DenseLayer::from_rows(&rows, vec![0.0; 3]).unwrap();
        assert_eq!(layer.forward(&[0.25, -3.0, 7.0]).unwrap(), vec![0.25, -3.0, 7.0]);
    }

    #[test]
    fn dense_hand_product() {
        let layer = DenseLayer::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(layer.forward(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn dense_rejects_wrong_input_length() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(layer.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn activation_definitions() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        assert_eq!(relu(&[-1.0, 2.0]), vec![0.0, 2.0]);
        let s = softmax(&[0.0, 0.0, 0.0]);
        for v in s {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(-800.0) < 1e-300);
        assert_eq!(sigmoid_scalar(800.0), 1.0);
    }

    #[test]
    fn lstm_zero_cell_from_zero_state() {
        let cell = LstmCell::zeros(2, 1);
        let (h, st) = cell.step(&[3.0, -1.0], &LstmState::zeros(1)).unwrap();
        assert_eq!(h, vec![0.0]);
        assert_eq!(st.c, vec![0.0]);
    }

    #[test]
    fn lstm_zero_cell_halves_cell_state() {
        let cell = LstmCell::zeros(2, 1);
        let state = LstmState {
            h: vec![0.0],
            c: vec![1.0],
        };
        let (h, st) = cell.step(&[0.3, 0.7], &state).unwrap();
        assert_eq!(st.c, vec![0.5]);
        assert!((h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn lstm_two_steps_match_reference() {
        let cell = random_cell(4, 5, 11);
        let xs = [[0.1, -0.4, 1.0, 0.0], [1.0, 0.0, -0.2, 0.7]];
        let mut state = LstmState::zeros(5);
        let (mut rh, mut rc) = (vec![0.0; 5], vec![0.0; 5]);
        for x in &xs {
            let (_, s) = cell.step(x, &state).unwrap();
            state = s;
            let (h2, c2) = reference_lstm_step(&cell, x, &rh, &rc);
            rh = h2;
            rc = c2;
        }
        for k in 0..5 {
            assert!((state.h[k] - rh[k]).abs() < 1e-12);
            assert!((state.c[k] - rc[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_rejects_bad_state() {
        let cell = LstmCell::zeros(2, 3);
        assert!(cell.step(&[0.0, 0.0], &LstmState::zeros(2)).is_err());
        assert!(cell.step(&[0.0], &LstmState::zeros(3)).is_err());
    }

    #[test]
    fn flatten_counts_are_additive() {
        // 2·2+2 = 6 and 1·(3+1) = 4
        let layers = vec![
            ("a".to_string(), Layer::Dense(DenseLayer::zeros(2, 2))),
            ("b".to_string(), Layer::Dense(DenseLayer::zeros(3, 1))),
        ];
        let p = flatten(&layers);
        assert_eq!(p.len(), 10);
        assert_eq!(p.layout[1].offset, 6);
    }

    #[test]
    fn target_sender_parameter_count() {
        let mut arch = Architecture::new();
        arch.push("l1", LayerShape::Dense { in_dim: 6, out_dim: 50 })
            .push(
                "l2",
                LayerShape::Dense {
                    in_dim: 50,
                    out_dim: 50,
                },
            )
            .push(
                "l3",
                LayerShape::Dense {
                    in_dim: 50,
                    out_dim: 10,
                },
            );
        assert_eq!(arch.param_count(), 350 + 2550 + 510);
    }

    #[test]
    fn unflatten_rejects_length_mismatch() {
        let mut arch = Architecture::new();
        arch.push("l", LayerShape::Dense { in_dim: 2, out_dim: 2 });
        assert!(matches!(unflatten(&[0.0; 5], &arch), Err(Error::Checkpoint(_))));
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(x in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let s = softmax(&x);
            let sum: f64 = s.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (v, xi) in s.iter().zip(&x) {
                prop_assert!(*v <= 1.0);
                // exp underflows to zero once the gap to the max passes ~745
                if max - xi < 700.0 {
                    prop_assert!(*v > 0.0);
                } else {
                    prop_assert!(*v >= 0.0);
                }
            }
        }

        #[test]
        fn softmax_shift_invariant(x in prop::collection::vec(-50f64..50.0, 1..20), c in -100f64..100.0) {
            let a = softmax(&x);
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let b = softmax(&shifted);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn flatten_unflatten_round_trip(seed in any::<u64>(), hidden in 1usize..6, inp in 1usize..5) {
            let mut arch = Architecture::new();
            arch.push("lstm", LayerShape::Lstm { in_dim: inp, hidden_dim: hidden })
                .push("d", LayerShape::Dense { in_dim: hidden, out_dim: 3 });
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
            let p = arch.init_normal(1.0, &mut rng).unwrap();
            let layers = unflatten(&p.values, &arch).unwrap();
            let back = flatten(&layers);
            prop_assert_eq!(back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            p.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.layout, p.layout);
        }

        #[test]
        fn lstm_matches_reference(seed in any::<u64>(), x in prop::collection::vec(-2f64..2.0, 3),
                                  h in prop::collection::vec(-1f64..1.0, 4), c in prop::collection::vec(-3f64..3.0, 4)) {
            let cell = random_cell(3, 4, seed);
            let state = LstmState { h: h.clone(), c: c.clone() };
            let (_, next) = cell.step(&x, &state).unwrap();
            let (rh, rc) = reference_lstm_step(&cell, &x, &h, &c);
            for k in 0..4 {
                prop_assert!((next.h[k] - rh[k]).abs() < 1e-12);
                prop_assert!((next.c[k] - rc[k]).abs() < 1e-12);
            }
        }
    }
}
