//! Protocol inspection: which signals a sender emits for a target in a
//! context, and which targets each observed signal refers to.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngExt;

use super::config::ExperimentConfig;
use crate::agents::{SignalVec, sample_signal};
use crate::error::{Error, Result};
use crate::evaluator::EpisodeRunner;
use crate::rng::{stream, tag};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolOptions {
    /// Contexts sampled per target; 0 enumerates every ordered context.
    pub contexts_per_target: usize,
    /// Signals drawn per (target, context).
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            contexts_per_target: 5,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub target: usize,
    /// Presentation order.
    pub context: Vec<usize>,
    /// Bit probabilities of the sender for this input.
    pub bit_probs: Vec<f64>,
    /// Observed signals with their relative frequency, most frequent first.
    pub signals: Vec<(SignalVec, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Referent {
    pub signal: SignalVec,
    pub count: usize,
    /// Estimated P(T = t | σ), most probable first.
    pub targets: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub samples: usize,
    pub emissions: Vec<Emission>,
    pub referents: Vec<Referent>,
    /// Per target: signal counts pooled over its contexts.
    per_target: Vec<BTreeMap<u64, usize>>,
    signal_length: usize,
}

impl ProtocolReport {
    /// Frequency of each target's most frequent signal, pooled over contexts.
    pub fn target_modal_frequencies(&self) -> Vec<f64> {
        self.per_target
            .iter()
            .map(|counts| {
                let total: usize = counts.values().sum();
                let max = counts.values().copied().max().unwrap_or(0);
                if total == 0 { 0.0 } else { max as f64 / total as f64 }
            })
            .collect()
    }

    /// Probability of each observed signal's most likely referent.
    pub fn signal_modal_frequencies(&self) -> Vec<(SignalVec, f64)> {
        self.referents
            .iter()
            .map(|r| (r.signal, r.targets.first().map_or(0.0, |t| t.1)))
            .collect()
    }

    pub fn emissions_csv(&self) -> String {
        let mut s = String::from("target,context,signal,frequency\n");
        for e in &self.emissions {
            let ctx = join(&e.context, " ");
            for (sig, f) in &e.signals {
                writeln!(s, "{},{},{},{}", e.target, ctx, sig, f).expect("writing to a String");
            }
        }
        s
    }

    pub fn referents_csv(&self) -> String {
        let mut s = String::from("signal,count,target,probability\n");
        for r in &self.referents {
            for (t, p) in &r.targets {
                writeln!(s, "{},{},{},{}", r.signal, r.count, t, p).expect("writing to a String");
            }
        }
        s
    }

    /// Human-readable digest: top signals per input and top referents per signal.
    pub fn to_text(&self, top: usize) -> String {
        let mut s = String::new();
        writeln!(s, "signal emissions ({} samples per target and context)", self.samples).unwrap();
        for e in &self.emissions {
            let shown: Vec<String> = e
                .signals
                .iter()
                .take(top)
                .map(|(sig, f)| format!("{sig} {f:.3}"))
                .collect();
            writeln!(
                s,
                "  target {} in [{}]: {}",
                e.target,
                join(&e.context, " "),
                shown.join(", ")
            )
            .unwrap();
        }
        let modal = self.target_modal_frequencies();
        writeln!(s, "modal signal frequency per target: {}", join_f(&modal)).unwrap();
        writeln!(s, "referents P(T|signal)").unwrap();
        for r in &self.referents {
            let shown: Vec<String> = r.targets.iter().take(top).map(|(t, p)| format!("{t} {p:.3}")).collect();
            writeln!(s, "  {} (n={}): {}", r.signal, r.count, shown.join(", ")).unwrap();
        }
        s
    }

    pub fn signal_length(&self) -> usize {
        self.signal_length
    }
}

fn join(ids: &[usize], sep: &str) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(sep)
}

fn join_f(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

/// Every ordered context of the world's context size that contains `target`.
fn ordered_contexts(world: &World, target: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for o in 0..n {
            if !cur.contains(&o) {
                cur.push(o);
                extend(n, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut all = Vec::new();
    extend(world.num_objects(), world.spec.context_size, &mut Vec::new(), &mut all);
    all.retain(|c| c.contains(&target));
    all
}

/// Uniform context of the world's size containing `target`, in random order.
fn context_with<R: rand::Rng + ?Sized>(world: &World, target: usize, rng: &mut R) -> Vec<usize> {
    let n = world.num_objects();
    let k = world.spec.context_size;
    let mut pool: Vec<usize> = (0..n).filter(|&o| o != target).collect();
    for i in 0..k - 1 {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k - 1);
    let at = rng.random_range(0..k);
    pool.insert(at, target);
    pool
}

pub fn protocol_report(params: &[f64], cfg: &ExperimentConfig, opts: &ProtocolOptions) -> Result<ProtocolReport> {
    if opts.samples == 0 {
        return Err(Error::Config("protocol samples must be positive".into()));
    }
    let world = World::new(cfg.world)?;
    let spec = cfg.agent_spec();
    let expected = spec.param_count();
    if params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} parameters, the configured architecture needs {expected}",
            params.len()
        )));
    }
    let mut runner = EpisodeRunner::new(&spec, params, &world)?;
    let m = cfg.signal_length;
    let mut emissions = Vec::new();
    let mut per_target = vec![BTreeMap::new(); world.num_objects()];
    let mut joint: BTreeMap<u64, BTreeMap<usize, usize>> = BTreeMap::new();
    for target in 0..world.num_objects() {
        let contexts = if opts.contexts_per_target == 0 {
            ordered_contexts(&world, target)
        } else {
            let mut rng = stream(opts.seed, &[tag::PROTOCOL, target as u64]);
            (0..opts.contexts_per_target)
                .map(|_| context_with(&world, target, &mut rng))
                .collect()
        };
        for (ci, context) in contexts.into_iter().enumerate() {
            let probs = runner.emit_probs(target, &context);
            let mut rng = stream(opts.seed, &[tag::PROTOCOL, target as u64, ci as u64 + 1]);
            let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
            for _ in 0..opts.samples {
                *counts.entry(sample_signal(&probs, &mut rng).key()).or_default() += 1;
            }
            for (&k, &c) in &counts {
                *per_target[target].entry(k).or_default() += c;
                *joint.entry(k).or_default().entry(target).or_default() += c;
            }
            let mut signals: Vec<(SignalVec, f64)> = counts
                .into_iter()
                .map(|(k, c)| (SignalVec::from_key(k, m), c as f64 / opts.samples as f64))
                .collect();
            signals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.key().cmp(&b.0.key())));
            emissions.push(Emission {
                target,
                context,
                bit_probs: probs,
                signals,
            });
        }
    }
    let mut referents: Vec<Referent> = joint
        .into_iter()
        .map(|(k, by_target)| {
            let count: usize = by_target.values().sum();
            let mut targets: Vec<(usize, f64)> = by_target
                .into_iter()
                .map(|(t, c)| (t, c as f64 / count as f64))
                .collect();
            targets.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            Referent {
                signal: SignalVec::from_key(k, m),
                count,
                targets,
            }
        })
        .collect();
    referents.sort_by(|a, b| b.count.cmp(&a.count).then(a.signal.key().cmp(&b.signal.key())));
    Ok(ProtocolReport {
        samples: opts.samples,
        emissions,
        referents,
        per_target,
        signal_length: m,
    })
}
