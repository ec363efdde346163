//! Sender and receiver policies as forward passes over `nn` primitives.
//!
//! The target-only sender maps one object encoding through three dense
//! layers. The target-in-context sender runs an LSTM over the context,
//! pairing the target with each member, then two dense layers. Both end in a
//! per-bit sigmoid. The receiver scores every context object independently
//! against the signal; scores go through a softmax over the context.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::nn::{
    self, Architecture, DenseLayer, Layer, LayerShape, LstmCell, LstmState, apply_gates, relu_in_place, sigmoid_scalar,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SenderKind {
    /// Sees only the target.
    Target,
    /// Sees the target paired with every context member.
    TargetInContext,
}

impl SenderKind {
    pub fn label(&self) -> &'static str {
        match self {
            SenderKind::Target => "T",
            SenderKind::TargetInContext => "TC",
        }
    }
}

impl fmt::Display for SenderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SenderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T" | "t" => Ok(SenderKind::Target),
            "TC" | "tc" => Ok(SenderKind::TargetInContext),
            other => Err(Error::Config(format!(
                "unknown sender kind {other:?} (expected T or TC)"
            ))),
        }
    }
}

/// Binary signal of up to 64 bits. Bit `j` of the key is signal bit `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignalVec {
    key: u64,
    len: u8,
}

impl SignalVec {
    pub const MAX_LEN: usize = 64;

    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= Self::MAX_LEN, "signal longer than 64 bits");
        let key = bits.iter().enumerate().fold(0u64, |k, (j, &b)| k | ((b as u64) << j));
        SignalVec {
            key,
            len: bits.len() as u8,
        }
    }

    pub fn from_key(key: u64, len: usize) -> Self {
        assert!(len <= Self::MAX_LEN);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        SignalVec {
            key: key & mask,
            len: len as u8,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, j: usize) -> bool {
        (self.key >> j) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|j| self.bit(j)).collect()
    }

    /// Bits as 0.0 / 1.0, the form fed to the receiver.
    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|j| if self.bit(j) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for SignalVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            f.write_str(if self.bit(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Shapes of one sender/receiver pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentSpec {
    pub kind: SenderKind,
    pub encoding_len: usize,
    pub signal_length: usize,
    /// Width of every dense layer and of the LSTM state.
    pub width: usize,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.signal_length == 0 || self.signal_length > SignalVec::MAX_LEN {
            return Err(Error::Config(format!(
                "signal_length must be in 1..=64, got {}",
                self.signal_length
            )));
        }
        if self.width == 0 || self.encoding_len == 0 {
            return Err(Error::Config("layer width and encoding length must be positive".into()));
        }
        Ok(())
    }

    fn sender_shapes(&self) -> Vec<(&'static str, LayerShape)> {
        let (e, w, m) = (self.encoding_len, self.width, self.signal_length);
        match self.kind {
            SenderKind::Target => vec![
                ("sender.dense1", LayerShape::Dense { in_dim: e, out_dim: w }),
                ("sender.dense2", LayerShape::Dense { in_dim: w, out_dim: w }),
                ("sender.out", LayerShape::Dense { in_dim: w, out_dim: m }),
            ],
            SenderKind::TargetInContext => vec![
                (
                    "sender.lstm",
                    LayerShape::Lstm {
                        in_dim: 2 * e,
                        hidden_dim: w,
                    },
                ),
                ("sender.dense1", LayerShape::Dense { in_dim: w, out_dim: w }),
                ("sender.out", LayerShape::Dense { in_dim: w, out_dim: m }),
            ],
        }
    }

    fn receiver_shapes(&self) -> Vec<(&'static str, LayerShape)> {
        let (e, w, m) = (self.encoding_len, self.width, self.signal_length);
        vec![
            (
                "receiver.dense1",
                LayerShape::Dense {
                    in_dim: e + m,
                    out_dim: w,
                },
            ),
            ("receiver.dense2", LayerShape::Dense { in_dim: w, out_dim: w }),
            ("receiver.out", LayerShape::Dense { in_dim: w, out_dim: 1 }),
        ]
    }

    /// Sender layers first, then receiver layers.
    pub fn architecture(&self) -> Architecture {
        let mut arch = Architecture::new();
        for (name, shape) in self.sender_shapes().into_iter().chain(self.receiver_shapes()) {
            arch.push(name, shape);
        }
        arch
    }

    /// Length of the leading sender slice of the flat parameter vector.
    pub fn sender_param_count(&self) -> usize {
        self.sender_shapes().iter().map(|(_, s)| s.param_count()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.architecture().param_count()
    }
}

#[derive(Debug, Clone)]
pub enum Sender {
    Target {
        dense1: DenseLayer,
        dense2: DenseLayer,
        out: DenseLayer,
    },
    Context {
        lstm: LstmCell,
        dense1: DenseLayer,
        out: DenseLayer,
    },
}

#[derive(Debug, Clone)]
pub struct Receiver {
    pub dense1: DenseLayer,
    pub dense2: DenseLayer,
    pub out: DenseLayer,
}

/// One sender/receiver pair decoded from a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Agents {
    pub spec: AgentSpec,
    pub sender: Sender,
    pub receiver: Receiver,
}

fn take_dense(layers: &mut impl Iterator<Item = Layer>) -> DenseLayer {
    match layers.next() {
        Some(Layer::Dense(d)) => d,
        _ => unreachable!("architecture mismatch"),
    }
}

/// Pairs the target with every context member, in presentation order.
///
/// This is the single place the TC input schedule is defined; the target
/// itself gets a step too, so every sequence has `context_size` steps.
pub fn tc_input_sequence<'a>(target: &'a [f64], context: &'a [&'a [f64]]) -> impl Iterator<Item = Vec<f64>> + 'a {
    context.iter().map(move |obj| {
        let mut x = Vec::with_capacity(target.len() + obj.len());
        x.extend_from_slice(target);
        x.extend_from_slice(obj);
        x
    })
}

impl Agents {
    pub fn from_params(spec: &AgentSpec, params: &[f64]) -> Result<Self> {
        spec.validate()?;
        let layers = nn::unflatten(params, &spec.architecture())?;
        let mut it = layers.into_iter().map(|(_, l)| l);
        let sender = match spec.kind {
            SenderKind::Target => Sender::Target {
                dense1: take_dense(&mut it),
                dense2: take_dense(&mut it),
                out: take_dense(&mut it),
            },
            SenderKind::TargetInContext => {
                let lstm = match it.next() {
                    Some(Layer::Lstm(l)) => l,
                    _ => unreachable!("architecture mismatch"),
                };
                Sender::Context {
                    lstm,
                    dense1: take_dense(&mut it),
                    out: take_dense(&mut it),
                }
            }
        };
        let receiver = Receiver {
            dense1: take_dense(&mut it),
            dense2: take_dense(&mut it),
            out: take_dense(&mut it),
        };
        Ok(Agents {
            spec: *spec,
            sender,
            receiver,
        })
    }

    pub fn kind(&self) -> SenderKind {
        self.spec.kind
    }

    fn check_encoding(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.spec.encoding_len {
            return Err(Error::dim("object encoding", self.spec.encoding_len, v.len()));
        }
        Ok(())
    }

    /// Bit activation probabilities of the target-only sender.
    pub fn emit_probs_t(&self, target: &[f64]) -> Result<Vec<f64>> {
        let Sender::Target { dense1, dense2, out } = &self.sender else {
            return Err(Error::Config("emit_probs_t called on a TC sender".into()));
        };
        self.check_encoding(target)?;
        let mut h1 = vec![0.0; dense1.out_dim()];
        dense1.forward_into(target, &mut h1);
        relu_in_place(&mut h1);
        let mut h2 = vec![0.0; dense2.out_dim()];
        dense2.forward_into(&h1, &mut h2);
        relu_in_place(&mut h2);
        let mut logits = vec![0.0; out.out_dim()];
        out.forward_into(&h2, &mut logits);
        Ok(logits.into_iter().map(sigmoid_scalar).collect())
    }

    /// Bit activation probabilities of the target-in-context sender.
    /// `context` is in presentation order and includes the target.
    pub fn emit_probs_tc(&self, target: &[f64], context: &[&[f64]]) -> Result<Vec<f64>> {
        let Sender::Context { lstm, dense1, out } = &self.sender else {
            return Err(Error::Config("emit_probs_tc called on a T sender".into()));
        };
        self.check_encoding(target)?;
        for obj in context {
            self.check_encoding(obj)?;
        }
        if context.is_empty() {
            return Err(Error::Config("empty context".into()));
        }
        let mut state = LstmState::zeros(lstm.hidden_dim());
        for x in tc_input_sequence(target, context) {
            state = lstm.step(&x, &state)?.1;
        }
        Ok(sender_head(dense1, out, &state.h))
    }

    /// Dispatches on the sender kind; T senders ignore `context`.
    pub fn emit_probs(&self, target: &[f64], context: &[&[f64]]) -> Result<Vec<f64>> {
        match self.spec.kind {
            SenderKind::Target => self.emit_probs_t(target),
            SenderKind::TargetInContext => self.emit_probs_tc(target, context),
        }
    }

    /// Alignment score of one object against a signal.
    pub fn receiver_score(&self, signal: &SignalVec, object: &[f64]) -> Result<f64> {
        self.check_encoding(object)?;
        if signal.len() != self.spec.signal_length {
            return Err(Error::dim("signal", self.spec.signal_length, signal.len()));
        }
        let mut x = object.to_vec();
        x.extend(signal.to_f64());
        let r = &self.receiver;
        let mut h1 = vec![0.0; r.dense1.out_dim()];
        r.dense1.forward_into(&x, &mut h1);
        relu_in_place(&mut h1);
        Ok(receiver_tail(r, &h1))
    }

    pub fn receiver_scores(&self, signal: &SignalVec, context: &[&[f64]]) -> Result<Vec<f64>> {
        context.iter().map(|o| self.receiver_score(signal, o)).collect()
    }

    /// Samples an index into `context` from the softmax of the scores.
    pub fn receiver_choose<R: Rng + ?Sized>(
        &self,
        signal: &SignalVec,
        context: &[&[f64]],
        rng: &mut R,
    ) -> Result<usize> {
        if context.is_empty() {
            return Err(Error::Config("empty context".into()));
        }
        let scores = self.receiver_scores(signal, context)?;
        Ok(sample_index(&nn::softmax(&scores), rng))
    }
}

/// dense → ReLU → dense → sigmoid on the LSTM output.
fn sender_head(dense1: &DenseLayer, out: &DenseLayer, h: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; dense1.out_dim()];
    dense1.forward_into(h, &mut z);
    relu_in_place(&mut z);
    let mut logits = vec![0.0; out.out_dim()];
    out.forward_into(&z, &mut logits);
    logits.into_iter().map(sigmoid_scalar).collect()
}

/// Layers two and three of the receiver, after the first ReLU.
fn receiver_tail(r: &Receiver, h1: &[f64]) -> f64 {
    let mut h2 = vec![0.0; r.dense2.out_dim()];
    r.dense2.forward_into(h1, &mut h2);
    relu_in_place(&mut h2);
    let mut s = [0.0];
    r.out.forward_into(&h2, &mut s);
    s[0]
}

/// Independent Bernoulli draw per bit.
pub fn sample_signal<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> SignalVec {
    let mut key = 0u64;
    for (j, &p) in probs.iter().enumerate() {
        if rng.random::<f64>() < p {
            key |= 1 << j;
        }
    }
    SignalVec::from_key(key, probs.len())
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Per-world precomputation for fast repeated policy evaluation.
///
/// Object encodings enter the first layer of each network only through a
/// matrix product, so that product is computed once per object. The results
/// agree with the plain forward passes up to floating-point reassociation.
#[derive(Debug, Clone)]
pub struct PolicyTables {
    /// Receiver first-layer contribution of each object (no bias).
    receiver_object: Vec<Vec<f64>>,
    /// TC only: LSTM gate contribution of each object in the target slot
    /// and in the member slot.
    lstm_target: Vec<Vec<f64>>,
    lstm_member: Vec<Vec<f64>>,
}

impl PolicyTables {
    pub fn new(agents: &Agents, encodings: &[&[f64]]) -> Self {
        let e = agents.spec.encoding_len;
        let width = agents.receiver.dense1.out_dim();
        let receiver_object = encodings
            .iter()
            .map(|enc| {
                let mut v = vec![0.0; width];
                for (j, &x) in enc.iter().enumerate() {
                    if x != 0.0 {
                        for (o, &w) in v.iter_mut().zip(agents.receiver.dense1.column(j)) {
                            *o += w * x;
                        }
                    }
                }
                v
            })
            .collect();
        let (mut lstm_target, mut lstm_member) = (Vec::new(), Vec::new());
        if let Sender::Context { lstm, .. } = &agents.sender {
            let g = 4 * lstm.hidden_dim();
            let cols = lstm.input_columns();
            for enc in encodings {
                let mut t = vec![0.0; g];
                nn::accumulate_columns(&cols[..e * g], g, enc, &mut t);
                lstm_target.push(t);
                let mut m = vec![0.0; g];
                nn::accumulate_columns(&cols[e * g..], g, enc, &mut m);
                lstm_member.push(m);
            }
        }
        PolicyTables {
            receiver_object,
            lstm_target,
            lstm_member,
        }
    }

    /// TC sender output for object ids; same schedule as [`tc_input_sequence`].
    pub fn tc_probs(&self, agents: &Agents, target: usize, context: &[usize]) -> Vec<f64> {
        let mut state = LstmState::zeros(self.lstm_hidden(agents));
        for (step, &member) in context.iter().enumerate() {
            self.tc_step(agents, target, member, step == 0, &mut state);
        }
        self.tc_head(agents, &state.h)
    }

    fn lstm_hidden(&self, agents: &Agents) -> usize {
        match &agents.sender {
            Sender::Context { lstm, .. } => lstm.hidden_dim(),
            Sender::Target { .. } => panic!("TC policy on a T sender"),
        }
    }

    /// Advances the TC sender's LSTM by the step pairing `target` with
    /// `member`. `first` skips the hidden contribution of the zero state.
    pub fn tc_step(&self, agents: &Agents, target: usize, member: usize, first: bool, state: &mut LstmState) {
        let Sender::Context { lstm, .. } = &agents.sender else {
            panic!("TC policy on a T sender");
        };
        let mut gates = lstm.biases().to_vec();
        for ((g, a), b) in gates
            .iter_mut()
            .zip(&self.lstm_target[target])
            .zip(&self.lstm_member[member])
        {
            *g += a + b;
        }
        if !first {
            nn::accumulate_columns(lstm.hidden_columns(), gates.len(), &state.h, &mut gates);
        }
        apply_gates(&gates, state);
    }

    /// Bit probabilities from the final LSTM hidden state.
    pub fn tc_head(&self, agents: &Agents, h: &[f64]) -> Vec<f64> {
        let Sender::Context { dense1, out, .. } = &agents.sender else {
            panic!("TC policy on a T sender");
        };
        sender_head(dense1, out, h)
    }

    /// Receiver first-layer contribution of a signal (no bias).
    pub fn signal_part(&self, agents: &Agents, signal: &SignalVec) -> Vec<f64> {
        let d = &agents.receiver.dense1;
        let e = agents.spec.encoding_len;
        let mut v = vec![0.0; d.out_dim()];
        for j in 0..signal.len() {
            if signal.bit(j) {
                for (o, &w) in v.iter_mut().zip(d.column(e + j)) {
                    *o += w;
                }
            }
        }
        v
    }

    pub fn receiver_score(&self, agents: &Agents, object: usize, signal_part: &[f64]) -> f64 {
        let r = &agents.receiver;
        let mut h1: Vec<f64> = self.receiver_object[object]
            .iter()
            .zip(signal_part)
            .zip(r.dense1.bias())
            .map(|((a, b), c)| a + b + c)
            .collect();
        relu_in_place(&mut h1);
        receiver_tail(r, &h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::world::{WorldSpec, enumerate_objects};
    use rand::SeedableRng;

    fn spec(kind: SenderKind) -> AgentSpec {
        AgentSpec {
            kind,
            encoding_len: 6,
            signal_length: 10,
            width: 50,
        }
    }

    fn random_agents(kind: SenderKind, seed: u64) -> Agents {
        let s = spec(kind);
        let mut rng = StreamRng::seed_from_u64(seed);
        let p = s.architecture().init_normal(0.3, &mut rng).unwrap();
        Agents::from_params(&s, &p.values).unwrap()
    }

    fn encodings() -> Vec<Vec<f64>> {
        enumerate_objects(&WorldSpec::default())
            .into_iter()
            .map(|o| o.encoding)
            .collect()
    }

    fn mat_vec(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(b)
            .map(|(row, bi)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bi)
            .collect()
    }

    fn rows(d: &DenseLayer) -> Vec<Vec<f64>> {
        (0..d.out_dim())
            .map(|i| (0..d.in_dim()).map(|j| d.weight(i, j)).collect())
            .collect()
    }

    /// Step-by-step T-sender forward pass with explicit row-major products.
    fn reference_t(agents: &Agents, x: &[f64]) -> Vec<f64> {
        let Sender::Target { dense1, dense2, out } = &agents.sender else {
            unreachable!()
        };
        let relu = |v: Vec<f64>| v.into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        let h1 = relu(mat_vec(&rows(dense1), dense1.bias(), x));
        let h2 = relu(mat_vec(&rows(dense2), dense2.bias(), &h1));
        mat_vec(&rows(out), out.bias(), &h2)
            .into_iter()
            .map(|z| 1.0 / (1.0 + (-z).exp()))
            .collect()
    }

    fn reference_score(agents: &Agents, signal: &SignalVec, obj: &[f64]) -> f64 {
        let r = &agents.receiver;
        let relu = |v: Vec<f64>| v.into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        let mut x = obj.to_vec();
        x.extend(signal.to_f64());
        let h1 = relu(mat_vec(&rows(&r.dense1), r.dense1.bias(), &x));
        let h2 = relu(mat_vec(&rows(&r.dense2), r.dense2.bias(), &h1));
        mat_vec(&rows(&r.out), r.out.bias(), &h2)[0]
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(spec(SenderKind::Target).sender_param_count(), 3410);
        // LSTM 4·50·(12+50+1), then 50·51 and 10·51
        assert_eq!(
            spec(SenderKind::TargetInContext).sender_param_count(),
            12600 + 2550 + 510
        );
        // receiver: 50·17 + 50·51 + 51
        let s = spec(SenderKind::Target);
        assert_eq!(s.param_count() - s.sender_param_count(), 850 + 2550 + 51);
    }

    #[test]
    fn zero_parameters_give_half_probabilities() {
        for kind in [SenderKind::Target, SenderKind::TargetInContext] {
            let s = spec(kind);
            let agents = Agents::from_params(&s, &vec![0.0; s.param_count()]).unwrap();
            let enc = encodings();
            let ctx: Vec<&[f64]> = vec![&enc[0], &enc[4], &enc[8]];
            let p = agents.emit_probs(&enc[4], &ctx).unwrap();
            assert_eq!(p, vec![0.5; 10]);
        }
    }

    #[test]
    fn wrong_sender_kind_is_rejected() {
        let t = random_agents(SenderKind::Target, 1);
        let enc = encodings();
        assert!(t.emit_probs_tc(&enc[0], &[&enc[0]]).is_err());
        let tc = random_agents(SenderKind::TargetInContext, 1);
        assert!(tc.emit_probs_t(&enc[0]).is_err());
    }

    #[test]
    fn t_sender_matches_reference_and_ignores_context() {
        let agents = random_agents(SenderKind::Target, 5);
        let enc = encodings();
        for x in &enc {
            let p = agents.emit_probs_t(x).unwrap();
            let r = reference_t(&agents, x);
            for (a, b) in p.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(p, agents.emit_probs_t(x).unwrap());
            let c1: Vec<&[f64]> = vec![&enc[0], &enc[1]];
            let c2: Vec<&[f64]> = vec![&enc[7], &enc[3]];
            assert_eq!(agents.emit_probs(x, &c1).unwrap(), agents.emit_probs(x, &c2).unwrap());
        }
    }

    #[test]
    fn tc_sender_with_constant_sequence_depends_on_target_only() {
        let agents = random_agents(SenderKind::TargetInContext, 8);
        let enc = encodings();
        let a = agents.emit_probs_tc(&enc[2], &[&enc[2], &enc[2], &enc[2]]).unwrap();
        let b = agents.emit_probs_tc(&enc[2], &[&enc[2], &enc[2], &enc[2]]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn tc_sender_order_sensitivity_is_observable() {
        let agents = random_agents(SenderKind::TargetInContext, 9);
        let enc = encodings();
        let a = agents.emit_probs_tc(&enc[1], &[&enc[1], &enc[3], &enc[5]]).unwrap();
        let b = agents.emit_probs_tc(&enc[1], &[&enc[1], &enc[5], &enc[3]]).unwrap();
        // with random weights the LSTM sees two different sequences
        assert_ne!(a, b);
    }

    #[test]
    fn fast_tables_agree_with_plain_forward() {
        let enc = encodings();
        let refs: Vec<&[f64]> = enc.iter().map(Vec::as_slice).collect();
        let agents = random_agents(SenderKind::TargetInContext, 21);
        let tables = PolicyTables::new(&agents, &refs);
        let ids = [4usize, 0, 7];
        let ctx: Vec<&[f64]> = ids.iter().map(|&i| refs[i]).collect();
        let slow = agents.emit_probs_tc(refs[0], &ctx).unwrap();
        let fast = tables.tc_probs(&agents, 0, &ids);
        for (a, b) in slow.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut rng = StreamRng::seed_from_u64(3);
        for _ in 0..20 {
            let sig = sample_signal(&[0.5; 10], &mut rng);
            let part = tables.signal_part(&agents, &sig);
            for (i, obj) in refs.iter().enumerate() {
                let s = agents.receiver_score(&sig, obj).unwrap();
                assert!((s - tables.receiver_score(&agents, i, &part)).abs() < 1e-12);
                assert!((s - reference_score(&agents, &sig, obj)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_signal_probabilities() {
        let mut rng = StreamRng::seed_from_u64(0);
        assert_eq!(sample_signal(&[0.0; 10], &mut rng).key(), 0);
        assert_eq!(sample_signal(&[1.0; 10], &mut rng).key(), (1 << 10) - 1);
    }

    #[test]
    fn fair_bits_are_fair() {
        let mut rng = StreamRng::seed_from_u64(77);
        let n = 10_000;
        let mut ones = [0usize; 10];
        for _ in 0..n {
            let s = sample_signal(&[0.5; 10], &mut rng);
            for (j, c) in ones.iter_mut().enumerate() {
                *c += s.bit(j) as usize;
            }
        }
        for c in ones {
            assert!((c as f64 / n as f64 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn zero_receiver_chooses_uniformly() {
        let s = spec(SenderKind::Target);
        let agents = Agents::from_params(&s, &vec![0.0; s.param_count()]).unwrap();
        let enc = encodings();
        let ctx: Vec<&[f64]> = vec![&enc[1], &enc[2], &enc[3]];
        let sig = SignalVec::from_key(0b1011, 10);
        assert_eq!(agents.receiver_scores(&sig, &ctx).unwrap(), vec![0.0; 3]);
        let mut rng = StreamRng::seed_from_u64(5);
        let mut counts = [0usize; 3];
        for _ in 0..9000 {
            counts[agents.receiver_choose(&sig, &ctx, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 9000.0 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn receiver_choice_distribution_matches_reference_softmax() {
        let agents = random_agents(SenderKind::Target, 13);
        let enc = encodings();
        let ctx: Vec<&[f64]> = vec![&enc[6], &enc[2], &enc[5]];
        let sig = SignalVec::from_key(0b0110100101, 10);
        let scores: Vec<f64> = ctx.iter().map(|o| reference_score(&agents, &sig, o)).collect();
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        let expected: Vec<f64> = scores.iter().map(|s| (s - max).exp() / z).collect();
        let mut rng = StreamRng::seed_from_u64(99);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            counts[agents.receiver_choose(&sig, &ctx, &mut rng).unwrap()] += 1;
        }
        for (c, e) in counts.iter().zip(&expected) {
            assert!((*c as f64 / n as f64 - e).abs() < 0.02);
        }
    }

    #[test]
    fn receiver_distribution_follows_context_permutation() {
        let agents = random_agents(SenderKind::Target, 17);
        let enc = encodings();
        let sig = SignalVec::from_key(0b11, 10);
        let a = agents.receiver_scores(&sig, &[&enc[0], &enc[1], &enc[2]]).unwrap();
        let b = agents.receiver_scores(&sig, &[&enc[2], &enc[0], &enc[1]]).unwrap();
        assert_eq!(a, vec![b[1], b[2], b[0]]);
    }

    #[test]
    fn signal_keys() {
        let s = SignalVec::from_bits(&[true, false, true]);
        assert_eq!(s.key(), 0b101);
        assert_eq!(s.to_string(), "101");
        assert_eq!(s.bits(), vec![true, false, true]);
        assert_eq!("TC".parse::<SenderKind>().unwrap(), SenderKind::TargetInContext);
        assert!("X".parse::<SenderKind>().is_err());
    }
}
