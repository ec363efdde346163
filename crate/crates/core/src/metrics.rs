//! Plug-in estimates of protocol metrics from a batch of episodes.
//!
//! All distributions are empirical frequencies over the batch. Contexts are
//! keyed by their sorted member ids. Entropies are in bits, with 0·log 0 = 0.
//! Maps are ordered so every sum runs in the same order on every call.

use std::collections::BTreeMap;

use crate::agents::SignalVec;
use crate::evaluator::EpisodeLog;

/// One row of joint observations (signal, target, context, response).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Observation {
    pub signal: u64,
    pub target: usize,
    pub context: Vec<usize>,
    pub response: usize,
}

/// Exact joint counts over (σ, T, C, R).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTable {
    counts: BTreeMap<Observation, usize>,
    n: usize,
    signal_length: usize,
}

/// Random variables a mutual information can be taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Signal,
    Target,
    Context,
    Response,
    /// Context set and signal jointly.
    ContextSignal,
    /// Target and context set jointly: the sender's whole observation.
    TargetContext,
}

impl Var {
    fn key(self, o: &Observation) -> Vec<u64> {
        match self {
            Var::Signal => vec![o.signal],
            Var::Target => vec![o.target as u64],
            Var::Response => vec![o.response as u64],
            Var::Context => o.context.iter().map(|&c| c as u64).collect(),
            Var::ContextSignal => o
                .context
                .iter()
                .map(|&c| c as u64)
                .chain(std::iter::once(o.signal))
                .collect(),
            Var::TargetContext => std::iter::once(o.target as u64)
                .chain(o.context.iter().map(|&c| c as u64))
                .collect(),
        }
    }
}

/// `−Σ p log2 p` over a count table.
fn entropy_of_counts<'a>(counts: impl IntoIterator<Item = &'a usize>, n: usize) -> f64 {
    let n = n as f64;
    counts
        .into_iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

impl EmpiricalTable {
    pub fn from_observations<I: IntoIterator<Item = Observation>>(obs: I, signal_length: usize) -> Self {
        let mut counts = BTreeMap::new();
        let mut n = 0;
        for o in obs {
            *counts.entry(o).or_insert(0) += 1;
            n += 1;
        }
        EmpiricalTable {
            counts,
            n,
            signal_length,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn signal_length(&self) -> usize {
        self.signal_length
    }

    pub fn counts(&self) -> &BTreeMap<Observation, usize> {
        &self.counts
    }

    /// Counts of an arbitrary function of the observation.
    pub fn marginal<K: Ord>(&self, f: impl Fn(&Observation) -> K) -> BTreeMap<K, usize> {
        let mut out = BTreeMap::new();
        for (o, &c) in &self.counts {
            *out.entry(f(o)).or_insert(0) += c;
        }
        out
    }

    /// Empirical P(T = o | σ) for every observed pair.
    pub fn target_given_signal(&self) -> BTreeMap<u64, BTreeMap<usize, f64>> {
        let joint = self.marginal(|o| (o.signal, o.target));
        let sig = self.marginal(|o| o.signal);
        let mut out: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
        for (&(s, t), &c) in &joint {
            out.entry(s).or_default().insert(t, c as f64 / sig[&s] as f64);
        }
        out
    }

    pub fn entropy(&self, v: Var) -> f64 {
        entropy_of_counts(self.marginal(|o| v.key(o)).values(), self.n)
    }
}

pub fn build_table(episodes: &[EpisodeLog]) -> EmpiricalTable {
    let m = episodes.first().map_or(0, |e| e.signal.len());
    EmpiricalTable::from_observations(
        episodes.iter().map(|e| Observation {
            signal: e.signal.key(),
            target: e.target_id,
            context: {
                let mut c = e.context_ids.clone();
                c.sort_unstable();
                c
            },
            response: e.response_id,
        }),
        m,
    )
}

/// Mean over episodes of `max_o P(T = o | σ_i)`.
pub fn target_certainty(table: &EmpiricalTable) -> f64 {
    let joint = table.marginal(|o| (o.signal, o.target));
    let mut best: BTreeMap<u64, usize> = BTreeMap::new();
    for (&(s, _), &c) in &joint {
        let b = best.entry(s).or_insert(0);
        *b = (*b).max(c);
    }
    best.values().sum::<usize>() as f64 / table.n as f64
}

/// Mean over episodes of `max_σ P(σ | t_i)`.
pub fn signal_certainty(table: &EmpiricalTable) -> f64 {
    let joint = table.marginal(|o| (o.target, o.signal));
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(t, _), &c) in &joint {
        let b = best.entry(t).or_insert(0);
        *b = (*b).max(c);
    }
    best.values().sum::<usize>() as f64 / table.n as f64
}

/// Fraction of episodes whose target is the context member with the highest
/// global `P(T = o | σ_i)`; ties go to the lowest object id.
pub fn max_contextless_accuracy(table: &EmpiricalTable) -> f64 {
    let joint = table.marginal(|o| (o.signal, o.target));
    let hits: usize = table
        .counts
        .iter()
        .filter(|(o, _)| {
            // context is sorted, so strict `>` keeps the lowest id on ties
            let mut best = (o.context[0], 0usize);
            for (k, &member) in o.context.iter().enumerate() {
                let c = joint.get(&(o.signal, member)).copied().unwrap_or(0);
                if k == 0 || c > best.1 {
                    best = (member, c);
                }
            }
            best.0 == o.target
        })
        .map(|(_, &c)| c)
        .sum();
    hits as f64 / table.n as f64
}

/// Plug-in `I(X; Y)` in bits.
pub fn mutual_information(table: &EmpiricalTable, x: Var, y: Var) -> f64 {
    let joint = table.marginal(|o| (x.key(o), y.key(o)));
    let px = table.marginal(|o| x.key(o));
    let py = table.marginal(|o| y.key(o));
    let n = table.n as f64;
    joint
        .iter()
        .map(|((kx, ky), &c)| {
            let c = c as f64;
            (c / n) * (c * n / (px[kx] as f64 * py[ky] as f64)).log2()
        })
        .sum()
}

/// `I(σ; C) − I(σ; T)` where C is the sender's whole observation, the
/// context together with which member is the target. Equals `I(σ; C | T)`
/// and is non-negative up to rounding.
pub fn sender_context_gain(table: &EmpiricalTable) -> f64 {
    mutual_information(table, Var::Signal, Var::TargetContext) - mutual_information(table, Var::Signal, Var::Target)
}

/// `I(R; C, σ) − I(R; σ)`.
pub fn receiver_context_gain(table: &EmpiricalTable) -> f64 {
    mutual_information(table, Var::Response, Var::ContextSignal) - mutual_information(table, Var::Response, Var::Signal)
}

/// Entropy of the whole-signal distribution.
pub fn signal_entropy(table: &EmpiricalTable) -> f64 {
    table.entropy(Var::Signal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocSize {
    /// `Σ_j H(σ^j)`, the value used in the fitness.
    pub sum: f64,
    /// `sum / m`.
    pub mean: f64,
}

pub fn voc_size(table: &EmpiricalTable) -> VocSize {
    let per_signal = table.marginal(|o| o.signal);
    bit_entropies(per_signal.iter().map(|(&k, &c)| (k, c)), table.n, table.signal_length)
}

/// Per-bit entropy over a list of signals.
pub fn voc_size_of_signals(signals: &[SignalVec]) -> VocSize {
    let m = signals.first().map_or(0, SignalVec::len);
    bit_entropies(signals.iter().map(|s| (s.key(), 1)), signals.len(), m)
}

fn bit_entropies(keys: impl Iterator<Item = (u64, usize)>, n: usize, m: usize) -> VocSize {
    let mut ones = vec![0usize; m];
    for (key, c) in keys {
        for (j, o) in ones.iter_mut().enumerate() {
            if (key >> j) & 1 == 1 {
                *o += c;
            }
        }
    }
    let sum: f64 = ones.iter().map(|&c| binary_entropy(c as f64 / n as f64)).sum();
    VocSize {
        sum,
        mean: if m == 0 { 0.0 } else { sum / m as f64 },
    }
}

/// Every metric tracked per logged iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricRecord {
    pub accuracy: f64,
    pub fitness: f64,
    pub voc_sum: f64,
    pub voc_mean: f64,
    pub signal_entropy: f64,
    pub target_certainty: f64,
    pub signal_certainty: f64,
    pub max_contextless_accuracy: f64,
    pub sender_context_gain: f64,
    pub receiver_context_gain: f64,
}

impl MetricRecord {
    /// Column names in CSV order.
    pub const FIELDS: [&'static str; 10] = [
        "accuracy",
        "fitness",
        "voc_sum",
        "voc_mean",
        "signal_entropy",
        "target_certainty",
        "signal_certainty",
        "max_contextless_accuracy",
        "sender_context_gain",
        "receiver_context_gain",
    ];

    pub fn values(&self) -> [f64; 10] {
        [
            self.accuracy,
            self.fitness,
            self.voc_sum,
            self.voc_mean,
            self.signal_entropy,
            self.target_certainty,
            self.signal_certainty,
            self.max_contextless_accuracy,
            self.sender_context_gain,
            self.receiver_context_gain,
        ]
    }

    pub fn from_values(v: [f64; 10]) -> Self {
        MetricRecord {
            accuracy: v[0],
            fitness: v[1],
            voc_sum: v[2],
            voc_mean: v[3],
            signal_entropy: v[4],
            target_certainty: v[5],
            signal_certainty: v[6],
            max_contextless_accuracy: v[7],
            sender_context_gain: v[8],
            receiver_context_gain: v[9],
        }
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        Self::FIELDS.iter().position(|&f| f == field).map(|i| self.values()[i])
    }

    /// Computes every metric from one batch; fitness uses `voc_sum`.
    pub fn from_episodes(episodes: &[EpisodeLog], p_voc: f64) -> Self {
        let table = build_table(episodes);
        let accuracy = episodes.iter().map(|e| e.reward as f64).sum::<f64>() / episodes.len() as f64;
        let voc = voc_size(&table);
        MetricRecord {
            accuracy,
            fitness: accuracy - p_voc * voc.sum,
            voc_sum: voc.sum,
            voc_mean: voc.mean,
            signal_entropy: signal_entropy(&table),
            target_certainty: target_certainty(&table),
            signal_certainty: signal_certainty(&table),
            max_contextless_accuracy: max_contextless_accuracy(&table),
            sender_context_gain: sender_context_gain(&table),
            receiver_context_gain: receiver_context_gain(&table),
        }
    }
}
