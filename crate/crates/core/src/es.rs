//! Evolution strategies with mirrored sampling and an AdamW ascent step.
//!
//! Each iteration draws `population / 2` Gaussian noise vectors, evaluates
//! `θ + σε` and `θ − σε` for each, forms
//! `ĝ = (1 / (population · σ)) Σ_k ε_k F_k` and takes one AdamW step uphill.
//! Noise, candidate episodes and evaluation batches each come from their own
//! derived stream, so a run is a pure function of its seed.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::ThreadPool;
use rayon::prelude::*;

use crate::agents::AgentSpec;
use crate::error::{Error, Result};
use crate::evaluator::{BatchResult, EpisodeRunner};
use crate::metrics::MetricRecord;
use crate::nn::{Init, ParamVec};
use crate::rng::{derive_seed, stream, tag};
use crate::world::World;

/// How `episodes_per_eval` is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeBudget {
    /// Every candidate plays `episodes_per_eval` episodes.
    PerCandidate,
    /// `episodes_per_eval` is split evenly over the population.
    PerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessShaping {
    Raw,
    /// Ranks mapped linearly onto [-0.5, 0.5].
    CenteredRank,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsConfig {
    /// Perturbed evaluations per iteration; must be even.
    pub population: usize,
    pub noise_sigma: f64,
    pub learning_rate_sender: f64,
    pub learning_rate_receiver: f64,
    pub weight_decay: f64,
    pub p_voc: f64,
    pub episodes_per_eval: usize,
    pub budget: EpisodeBudget,
    pub shaping: FitnessShaping,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population: 50,
            noise_sigma: 0.1,
            learning_rate_sender: 0.02,
            learning_rate_receiver: 0.02,
            weight_decay: 0.01,
            p_voc: 0.0,
            episodes_per_eval: 400,
            budget: EpisodeBudget::PerCandidate,
            shaping: FitnessShaping::Raw,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || !self.population.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population must be a positive even number, got {}",
                self.population
            )));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.noise_sigma > 0.0) {
            return Err(Error::Config("noise_sigma must be positive".into()));
        }
        if self.episodes_per_eval == 0 {
            return Err(Error::Config("episodes_per_eval must be positive".into()));
        }
        if self.p_voc < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("p_voc and weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    pub fn episodes_per_candidate(&self) -> usize {
        match self.budget {
            EpisodeBudget::PerCandidate => self.episodes_per_eval,
            EpisodeBudget::PerIteration => (self.episodes_per_eval / self.population).max(1),
        }
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        AdamWState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One mirrored pair `θ ± σε`.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub pair: usize,
    pub noise: Vec<f64>,
}

impl Perturbation {
    pub fn candidates(&self, theta: &[f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let plus = theta.iter().zip(&self.noise).map(|(t, e)| t + sigma * e).collect();
        let minus = theta.iter().zip(&self.noise).map(|(t, e)| t - sigma * e).collect();
        (plus, minus)
    }
}

/// `population / 2` standard normal noise vectors; pair `k` draws from the
/// stream `(seed, k)`.
pub fn sample_population(dim: usize, population: usize, seed: u64) -> Result<Vec<Perturbation>> {
    if population == 0 || !population.is_multiple_of(2) {
        return Err(Error::Config(format!("population must be even, got {population}")));
    }
    Ok((0..population / 2)
        .map(|pair| {
            let mut rng = stream(seed, &[pair as u64]);
            let noise = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            Perturbation { pair, noise }
        })
        .collect())
}

/// `(1 / (population · σ)) Σ_k ε_k F_k` with each mirrored candidate
/// contributing its own sign: a pair adds `ε (F⁺ − F⁻)`.
pub fn estimate_gradient(fitness_pairs: &[(f64, f64)], noises: &[Vec<f64>], sigma: f64) -> Result<Vec<f64>> {
    if fitness_pairs.len() != noises.len() {
        return Err(Error::Logic(format!(
            "{} fitness pairs for {} noise vectors",
            fitness_pairs.len(),
            noises.len()
        )));
    }
    let dim = noises.first().map_or(0, Vec::len);
    let mut grad = vec![0.0; dim];
    for (&(plus, minus), eps) in fitness_pairs.iter().zip(noises) {
        if eps.len() != dim {
            return Err(Error::Logic("noise vectors differ in length".into()));
        }
        let diff = plus - minus;
        for (g, e) in grad.iter_mut().zip(eps) {
            *g += e * diff;
        }
    }
    let scale = 1.0 / (2.0 * fitness_pairs.len() as f64 * sigma);
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}

/// Replaces raw fitnesses by centered ranks in [-0.5, 0.5]; equal values
/// share their mean rank.
pub fn centered_ranks(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let flat: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let n = flat.len();
    if n < 2 {
        return vec![(0.0, 0.0); pairs.len()];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && flat[order[j + 1]] == flat[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

/// AdamW ascent: `θ += lr · m̂ / (√v̂ + ε)`, then `θ *= 1 − lr · wd`.
/// The first `split` coordinates use `lr_head`, the rest `lr_tail`.
pub fn adamw_step(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut AdamWState,
    split: usize,
    lr_head: f64,
    lr_tail: f64,
    weight_decay: f64,
) -> Result<()> {
    if grad.len() != theta.len() || state.m.len() != theta.len() || state.v.len() != theta.len() {
        return Err(Error::dim("adamw state", theta.len(), grad.len().min(state.m.len())));
    }
    state.step += 1;
    let bc1 = 1.0 - BETA1.powf(state.step as f64);
    let bc2 = 1.0 - BETA2.powf(state.step as f64);
    for (i, ((t, &g), (m, v))) in theta
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .enumerate()
    {
        let lr = if i < split { lr_head } else { lr_tail };
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *t += lr * m_hat / (v_hat.sqrt() + EPSILON);
        *t *= 1.0 - lr * weight_decay;
    }
    Ok(())
}

/// Everything a single training run needs besides its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub world: World,
    pub agents: AgentSpec,
    pub es: EsConfig,
    pub init: Init,
    /// Episodes in the batch played at the central θ for metrics.
    pub eval_episodes: usize,
}

impl RunSetup {
    pub fn validate(&self) -> Result<()> {
        self.world.spec.validate()?;
        self.agents.validate()?;
        self.es.validate()?;
        if self.agents.encoding_len != self.world.spec.encoding_len() {
            return Err(Error::Config("agent encoding length does not match the world".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        Ok(())
    }
}

/// One training run: central parameters, optimizer state and iteration count.
pub struct Trainer {
    setup: RunSetup,
    seed: u64,
    theta: ParamVec,
    adam: AdamWState,
    iteration: u64,
    pool: Option<Arc<ThreadPool>>,
}

impl Trainer {
    pub fn new(setup: RunSetup, seed: u64) -> Result<Self> {
        setup.validate()?;
        let arch = setup.agents.architecture();
        let mut rng = stream(seed, &[tag::INIT]);
        let theta = arch.init(setup.init, &mut rng)?;
        let adam = AdamWState::new(theta.len());
        Ok(Trainer {
            setup,
            seed,
            theta,
            adam,
            iteration: 0,
            pool: None,
        })
    }

    /// Resumes from saved parameters and optimizer moments.
    pub fn from_parts(setup: RunSetup, seed: u64, theta: Vec<f64>, adam: AdamWState, iteration: u64) -> Result<Self> {
        setup.validate()?;
        let arch = setup.agents.architecture();
        if theta.len() != arch.param_count() || adam.m.len() != theta.len() || adam.v.len() != theta.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, architecture needs {}",
                theta.len(),
                arch.param_count()
            )));
        }
        Ok(Trainer {
            setup,
            seed,
            theta: ParamVec {
                values: theta,
                layout: arch.layout(),
            },
            adam,
            iteration,
            pool: None,
        })
    }

    /// Runs candidate evaluations on a dedicated pool.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        self.pool = Some(Arc::new(pool));
        Ok(self)
    }

    pub fn setup(&self) -> &RunSetup {
        &self.setup
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta(&self) -> &ParamVec {
        &self.theta
    }

    pub fn adam(&self) -> &AdamWState {
        &self.adam
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    fn evaluate_pair(&self, pert: &Perturbation) -> (f64, f64) {
        let es = &self.setup.es;
        let (plus, minus) = pert.candidates(&self.theta.values, es.noise_sigma);
        // both members of a pair replay the same episode streams
        let seed = derive_seed(self.seed, &[tag::CANDIDATE, self.iteration, pert.pair as u64]);
        let n = es.episodes_per_candidate();
        let run = |params: &[f64]| {
            EpisodeRunner::new(&self.setup.agents, params, &self.setup.world)
                .expect("candidate has the trainer's architecture")
                .run_batch(n, es.p_voc, seed)
                .fitness
        };
        (run(&plus), run(&minus))
    }

    /// Gradient estimate at the current θ, without updating anything.
    pub fn gradient(&self) -> Result<Vec<f64>> {
        let es = &self.setup.es;
        let noise_seed = derive_seed(self.seed, &[tag::NOISE, self.iteration]);
        let perts = sample_population(self.theta.len(), es.population, noise_seed)?;
        let eval_all = || -> Vec<(f64, f64)> { perts.par_iter().map(|p| self.evaluate_pair(p)).collect() };
        let mut fitness = match &self.pool {
            Some(pool) => pool.install(eval_all),
            None => eval_all(),
        };
        if es.shaping == FitnessShaping::CenteredRank {
            fitness = centered_ranks(&fitness);
        }
        let noises: Vec<Vec<f64>> = perts.into_iter().map(|p| p.noise).collect();
        estimate_gradient(&fitness, &noises, es.noise_sigma)
    }

    /// One ES iteration: estimate the gradient and take an AdamW step.
    pub fn step(&mut self) -> Result<()> {
        let grad = self.gradient()?;
        let es = self.setup.es;
        adamw_step(
            &mut self.theta.values,
            &grad,
            &mut self.adam,
            self.setup.agents.sender_param_count(),
            es.learning_rate_sender,
            es.learning_rate_receiver,
            es.weight_decay,
        )?;
        self.iteration += 1;
        Ok(())
    }

    /// Plays the metrics batch at the current central θ.
    pub fn evaluate(&self) -> Result<(BatchResult, MetricRecord)> {
        let seed = derive_seed(self.seed, &[tag::EVAL, self.iteration]);
        let batch = EpisodeRunner::new(&self.setup.agents, &self.theta.values, &self.setup.world)?.run_batch(
            self.setup.eval_episodes,
            self.setup.es.p_voc,
            seed,
        );
        let record = MetricRecord::from_episodes(&batch.episodes, self.setup.es.p_voc);
        Ok((batch, record))
    }

    /// Trains for `iterations` more steps, reporting the metrics of the
    /// starting point and of every `metric_every`-th iteration to `on_metrics`.
    pub fn train<F>(&mut self, iterations: u64, metric_every: u64, mut on_metrics: F) -> Result<()>
    where
        F: FnMut(&Trainer, &MetricRecord) -> Result<()>,
    {
        let metric_every = metric_every.max(1);
        let end = self.iteration + iterations;
        if self.iteration.is_multiple_of(metric_every) {
            let (_, rec) = self.evaluate()?;
            on_metrics(self, &rec)?;
        }
        while self.iteration < end {
            self.step()?;
            if self.iteration.is_multiple_of(metric_every) || self.iteration == end {
                let (_, rec) = self.evaluate()?;
                on_metrics(self, &rec)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pair_for_population_two() {
        let p = sample_population(5, 2, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert!(sample_population(5, 3, 1).is_err());
    }

    #[test]
    fn mirrored_candidates_average_to_theta() {
        let theta = vec![0.3, -1.0, 2.0];
        let perts = sample_population(3, 10, 5).unwrap();
        let mut sum = vec![0.0; 3];
        for p in &perts {
            let (a, b) = p.candidates(&theta, 0.1);
            for i in 0..3 {
                // (θ+σε) + (θ−σε) − 2θ
                sum[i] += (a[i] - theta[i]) + (b[i] - theta[i]);
            }
        }
        for s in sum {
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn noise_has_unit_variance() {
        let perts = sample_population(1000, 200, 8).unwrap();
        let sigma = 0.1;
        let devs: Vec<f64> = perts.iter().flat_map(|p| p.noise.iter().map(|e| sigma * e)).collect();
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let var = devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05);
    }

    #[test]
    fn constant_fitness_gives_zero_gradient() {
        let perts = sample_population(4, 20, 3).unwrap();
        let noises: Vec<Vec<f64>> = perts.into_iter().map(|p| p.noise).collect();
        let g = estimate_gradient(&[(2.5, 2.5); 10], &noises, 0.1).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_one_dimensional_pair() {
        // F(θ) = θ at θ = 0.7 with ε = ±1 gives exactly 1
        for eps in [1.0, -1.0] {
            for sigma in [0.5, 0.01] {
                let f = |x: f64| x;
                let pair = (f(0.7 + sigma * eps), f(0.7 - sigma * eps));
                let g = estimate_gradient(&[pair], &[vec![eps]], sigma).unwrap();
                assert!((g[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_pair_estimate_is_eps_times_projection() {
        // for F(θ) = a·θ a pair yields ε (εᵀa) exactly
        let a = [0.5, -2.0, 1.5];
        let f = |x: &[f64]| x.iter().zip(&a).map(|(u, v)| u * v).sum::<f64>();
        let theta = [0.1, 0.2, 0.3];
        let sigma = 0.25;
        for p in sample_population(3, 8, 11).unwrap() {
            let (plus, minus) = p.candidates(&theta, sigma);
            let g = estimate_gradient(&[(f(&plus), f(&minus))], std::slice::from_ref(&p.noise), sigma).unwrap();
            let proj: f64 = p.noise.iter().zip(&a).map(|(e, v)| e * v).sum();
            for (gi, ei) in g.iter().zip(&p.noise) {
                assert!((gi - ei * proj).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_rejects_misaligned_inputs() {
        assert!(estimate_gradient(&[(1.0, 0.0)], &[], 0.1).is_err());
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut theta = vec![1.0, -2.0, 3.0];
        let mut st = AdamWState::new(3);
        adamw_step(&mut theta, &[0.0; 3], &mut st, 1, 0.05, 0.02, 0.0).unwrap();
        assert_eq!(theta, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // at t = 1, m̂ = g and v̂ = g², so the move is lr · g / (|g| + ε)
        let g = [0.3, -4.0, 1e-3];
        let mut theta = vec![0.0; 3];
        let mut st = AdamWState::new(3);
        adamw_step(&mut theta, &g, &mut st, 2, 0.05, 0.02, 0.0).unwrap();
        let lrs = [0.05, 0.05, 0.02];
        for i in 0..3 {
            let expected = lrs[i] * g[i] / (g[i].abs() + EPSILON);
            assert!((theta[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_decay_is_geometric() {
        let mut theta = vec![2.0, -1.0];
        let mut st = AdamWState::new(2);
        let (lr, wd, k) = (0.02, 0.01, 25);
        for _ in 0..k {
            adamw_step(&mut theta, &[0.0, 0.0], &mut st, 1, lr, lr, wd).unwrap();
        }
        let factor = (1.0 - lr * wd).powi(k);
        assert!((theta[0] - 2.0 * factor).abs() < 1e-12);
        assert!((theta[1] + factor).abs() < 1e-12);
    }

    #[test]
    fn centered_ranks_span_half_interval() {
        let r = centered_ranks(&[(3.0, 1.0), (2.0, 2.0)]);
        // sorted: 1, 2, 2, 3 → ranks 0, 1.5, 1.5, 3 over 3
        assert_eq!(r, vec![(0.5, -0.5), (0.0, 0.0)]);
    }
}
