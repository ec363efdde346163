//! Communication episodes, batches, accuracy and fitness.

use std::collections::HashMap;

use crate::agents::{AgentSpec, Agents, PolicyTables, SenderKind, SignalVec, sample_index, sample_signal};
use crate::error::Result;
use crate::metrics::voc_size_of_signals;
use crate::nn::{LstmState, softmax};
use crate::rng::{StreamRng, stream};
use crate::world::{World, sample_context};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeLog {
    pub target_id: usize,
    /// Presentation order.
    pub context_ids: Vec<usize>,
    pub signal: SignalVec,
    pub response_id: usize,
    /// 1 iff the receiver picked the target.
    pub reward: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub episodes: Vec<EpisodeLog>,
    pub accuracy: f64,
    /// Summed per-bit entropy, the vocabulary size used in the fitness.
    pub voc: f64,
    pub voc_mean: f64,
    pub fitness: f64,
}

/// Plays episodes for one fixed parameter vector.
///
/// Policy outputs are memoized per (target, ordered context) and per
/// (signal, object); the cached values are the same pure function outputs,
/// so memoization never changes a result.
pub struct EpisodeRunner<'a> {
    agents: Agents,
    world: &'a World,
    tables: PolicyTables,
    t_probs: Vec<Option<Vec<f64>>>,
    tc_probs: HashMap<u64, Vec<f64>>,
    /// LSTM states after each proper prefix, one map per prefix length.
    tc_prefixes: Vec<HashMap<u64, LstmState>>,
    tc_key_ok: bool,
    signal_parts: HashMap<u64, Vec<f64>>,
    scores: HashMap<(u64, usize), f64>,
}

impl<'a> EpisodeRunner<'a> {
    pub fn new(spec: &AgentSpec, params: &[f64], world: &'a World) -> Result<Self> {
        let agents = Agents::from_params(spec, params)?;
        Ok(Self::from_agents(agents, world))
    }

    pub fn from_agents(agents: Agents, world: &'a World) -> Self {
        let encodings: Vec<&[f64]> = world.objects.iter().map(|o| o.encoding.as_slice()).collect();
        let tables = PolicyTables::new(&agents, &encodings);
        let n = world.num_objects() as f64;
        let tc_key_ok = n.powi(world.spec.context_size as i32 + 1) < 2f64.powi(63);
        EpisodeRunner {
            agents,
            world,
            tables,
            t_probs: vec![None; world.num_objects()],
            tc_probs: HashMap::new(),
            tc_prefixes: vec![HashMap::new(); world.spec.context_size.saturating_sub(1)],
            tc_key_ok,
            signal_parts: HashMap::new(),
            scores: HashMap::new(),
        }
    }

    pub fn agents(&self) -> &Agents {
        &self.agents
    }

    /// Bit probabilities for a target in a context given in presentation order.
    pub fn emit_probs(&mut self, target: usize, context: &[usize]) -> Vec<f64> {
        match self.agents.kind() {
            SenderKind::Target => self.t_probs[target]
                .get_or_insert_with(|| {
                    self.agents
                        .emit_probs_t(self.world.encoding(target))
                        .expect("world encodings match the agent spec")
                })
                .clone(),
            SenderKind::TargetInContext => {
                if !self.tc_key_ok {
                    return self.tables.tc_probs(&self.agents, target, context);
                }
                let n = self.world.num_objects() as u64;
                let key = context.iter().fold(target as u64, |k, &c| k * n + c as u64);
                if let Some(p) = self.tc_probs.get(&key) {
                    return p.clone();
                }
                let p = self.tc_probs_prefixed(target, context);
                self.tc_probs.insert(key, p.clone());
                p
            }
        }
    }

    /// Same result as `PolicyTables::tc_probs`, reusing the LSTM state of the
    /// longest prefix seen before.
    fn tc_probs_prefixed(&mut self, target: usize, context: &[usize]) -> Vec<f64> {
        if context.len() != self.tc_prefixes.len() + 1 {
            return self.tables.tc_probs(&self.agents, target, context);
        }
        let n = self.world.num_objects() as u64;
        let mut state: Option<LstmState> = None;
        let mut key = target as u64;
        for (step, &member) in context.iter().enumerate() {
            key = key * n + member as u64;
            if step + 1 < context.len()
                && let Some(s) = self.tc_prefixes[step].get(&key)
            {
                state = Some(s.clone());
                continue;
            }
            let st = state.get_or_insert_with(|| LstmState::zeros(self.agents.spec.width));
            self.tables.tc_step(&self.agents, target, member, step == 0, st);
            if step + 1 < context.len() {
                self.tc_prefixes[step].insert(key, st.clone());
            }
        }
        let state = state.expect("non-empty context");
        self.tables.tc_head(&self.agents, &state.h)
    }

    pub fn score(&mut self, signal: &SignalVec, object: usize) -> f64 {
        if let Some(&s) = self.scores.get(&(signal.key(), object)) {
            return s;
        }
        let part = self
            .signal_parts
            .entry(signal.key())
            .or_insert_with(|| self.tables.signal_part(&self.agents, signal));
        let s = self.tables.receiver_score(&self.agents, object, part);
        self.scores.insert((signal.key(), object), s);
        s
    }

    /// Choice probabilities over the context, in presentation order.
    pub fn choice_probs(&mut self, signal: &SignalVec, context: &[usize]) -> Vec<f64> {
        let scores: Vec<f64> = context.iter().map(|&o| self.score(signal, o)).collect();
        softmax(&scores)
    }

    pub fn run_episode(&mut self, rng: &mut StreamRng) -> EpisodeLog {
        let ctx = sample_context(&self.world.spec, rng);
        let probs = self.emit_probs(ctx.target_id, &ctx.object_ids);
        let signal = sample_signal(&probs, rng);
        let choice = self.choice_probs(&signal, &ctx.object_ids);
        let response_id = ctx.object_ids[sample_index(&choice, rng)];
        EpisodeLog {
            target_id: ctx.target_id,
            reward: (response_id == ctx.target_id) as u8,
            context_ids: ctx.object_ids,
            signal,
            response_id,
        }
    }

    /// `n` episodes; episode `i` draws from the stream `(seed, i)`.
    pub fn run_batch(&mut self, n: usize, p_voc: f64, seed: u64) -> BatchResult {
        let episodes: Vec<EpisodeLog> = (0..n)
            .map(|i| self.run_episode(&mut stream(seed, &[i as u64])))
            .collect();
        summarize(episodes, p_voc)
    }
}

pub fn summarize(episodes: Vec<EpisodeLog>, p_voc: f64) -> BatchResult {
    let n = episodes.len().max(1) as f64;
    let accuracy = episodes.iter().map(|e| e.reward as f64).sum::<f64>() / n;
    let signals: Vec<SignalVec> = episodes.iter().map(|e| e.signal).collect();
    let voc = voc_size_of_signals(&signals);
    BatchResult {
        episodes,
        accuracy,
        voc: voc.sum,
        voc_mean: voc.mean,
        fitness: fitness(accuracy, voc.sum, p_voc),
    }
}

pub fn fitness(accuracy: f64, voc: f64, p_voc: f64) -> f64 {
    accuracy - p_voc * voc
}

/// Runs a batch for a flat parameter vector.
pub fn run_batch(
    params: &[f64],
    spec: &AgentSpec,
    world: &World,
    n: usize,
    p_voc: f64,
    seed: u64,
) -> Result<BatchResult> {
    Ok(EpisodeRunner::new(spec, params, world)?.run_batch(n, p_voc, seed))
}
