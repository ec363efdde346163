//! Experiment configuration: a line-oriented `key = value` file.
//!
//! Blank lines and `#` comments are ignored, unknown keys are rejected and
//! every key left out takes its default. The TC sender's learning rate
//! defaults to 0.05 unless `learning_rate_sender` is given explicitly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::{AgentSpec, SenderKind};
use crate::error::{Error, Result};
use crate::es::{EpisodeBudget, EsConfig, FitnessShaping, RunSetup};
use crate::nn::Init;
use crate::world::{World, WorldSpec};

pub const TC_SENDER_LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub world: WorldSpec,
    pub sender: SenderKind,
    pub signal_length: usize,
    /// Width of every dense layer and of the LSTM state.
    pub width: usize,
    pub es: EsConfig,
    pub init: Init,
    /// Episodes in the metrics batch played at the central parameters.
    pub eval_episodes: usize,
    pub iterations: u64,
    pub runs: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// 0 writes only the final checkpoint of each run.
    pub checkpoint_every: u64,
    pub metric_every: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldSpec::default(),
            sender: SenderKind::Target,
            signal_length: 10,
            width: 50,
            es: EsConfig::default(),
            init: Init::Normal { std: 0.1 },
            eval_episodes: 400,
            iterations: 50_000,
            runs: 10,
            master_seed: 0,
            output_dir: PathBuf::from("runs"),
            checkpoint_every: 0,
            metric_every: 50,
        }
    }
}

const KEYS: &[&str] = &[
    "num_properties",
    "values_per_property",
    "context_size",
    "sender",
    "signal_length",
    "width",
    "p_voc",
    "population",
    "noise_sigma",
    "learning_rate_sender",
    "learning_rate_receiver",
    "weight_decay",
    "episodes_per_eval",
    "episode_budget",
    "fitness_shaping",
    "init",
    "eval_episodes",
    "iterations",
    "runs",
    "master_seed",
    "output_dir",
    "checkpoint_every",
    "metric_every",
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn agent_spec(&self) -> AgentSpec {
        AgentSpec {
            kind: self.sender,
            encoding_len: self.world.encoding_len(),
            signal_length: self.signal_length,
            width: self.width,
        }
    }

    pub fn run_setup(&self) -> Result<RunSetup> {
        let setup = RunSetup {
            world: World::new(self.world)?,
            agents: self.agent_spec(),
            es: self.es,
            init: self.init,
            eval_episodes: self.eval_episodes,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.metric_every == 0 {
            return Err(Error::Config("runs and metric_every must be positive".into()));
        }
        self.run_setup().map(|_| ())
    }

    /// Row label in summaries, e.g. `T` or `TC + 0.1pVoc`.
    pub fn label(&self) -> String {
        if self.es.p_voc == 0.0 {
            self.sender.to_string()
        } else {
            format!("{} + {}pVoc", self.sender, self.es.p_voc)
        }
    }

    /// Every key with its value; parses back to an identical config.
    pub fn to_text(&self) -> String {
        let es = &self.es;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        kv("num_properties", self.world.num_properties.to_string());
        kv("values_per_property", self.world.values_per_property.to_string());
        kv("context_size", self.world.context_size.to_string());
        kv("sender", self.sender.to_string());
        kv("signal_length", self.signal_length.to_string());
        kv("width", self.width.to_string());
        kv("p_voc", es.p_voc.to_string());
        kv("population", es.population.to_string());
        kv("noise_sigma", es.noise_sigma.to_string());
        kv("learning_rate_sender", es.learning_rate_sender.to_string());
        kv("learning_rate_receiver", es.learning_rate_receiver.to_string());
        kv("weight_decay", es.weight_decay.to_string());
        kv("episodes_per_eval", es.episodes_per_eval.to_string());
        kv("episode_budget", budget_name(es.budget).into());
        kv("fitness_shaping", shaping_name(es.shaping).into());
        kv("init", self.init.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("iterations", self.iterations.to_string());
        kv("runs", self.runs.to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("metric_every", self.metric_every.to_string());
        s
    }

    fn set(&mut self, key: &str, value: &str, lr_sender_set: &mut bool) -> std::result::Result<(), String> {
        let es = &mut self.es;
        match key {
            "num_properties" => self.world.num_properties = positive(value)?,
            "values_per_property" => self.world.values_per_property = positive(value)?,
            "context_size" => self.world.context_size = positive(value)?,
            "sender" => self.sender = value.parse().map_err(|e: Error| e.to_string())?,
            "signal_length" => {
                let m = positive(value)?;
                if m > 64 {
                    return Err(format!("signal_length must be at most 64, got {m}"));
                }
                self.signal_length = m;
            }
            "width" => self.width = positive(value)?,
            "p_voc" => es.p_voc = non_negative(value)?,
            "population" => {
                let p = positive(value)?;
                if p % 2 != 0 {
                    return Err(format!("population must be even, got {p}"));
                }
                es.population = p;
            }
            "noise_sigma" => es.noise_sigma = strictly_positive(value)?,
            "learning_rate_sender" => {
                es.learning_rate_sender = strictly_positive(value)?;
                *lr_sender_set = true;
            }
            "learning_rate_receiver" => es.learning_rate_receiver = strictly_positive(value)?,
            "weight_decay" => es.weight_decay = non_negative(value)?,
            "episodes_per_eval" => es.episodes_per_eval = positive(value)?,
            "episode_budget" => {
                es.budget = match value {
                    "per_candidate" => EpisodeBudget::PerCandidate,
                    "per_iteration" => EpisodeBudget::PerIteration,
                    _ => {
                        return Err(format!(
                            "episode_budget must be per_candidate or per_iteration, got `{value}`"
                        ));
                    }
                }
            }
            "fitness_shaping" => {
                es.shaping = match value {
                    "raw" => FitnessShaping::Raw,
                    "centered_rank" => FitnessShaping::CenteredRank,
                    _ => return Err(format!("fitness_shaping must be raw or centered_rank, got `{value}`")),
                }
            }
            "init" => self.init = value.parse().map_err(|e: Error| e.to_string())?,
            "eval_episodes" => self.eval_episodes = positive(value)?,
            "iterations" => self.iterations = number(value)?,
            "runs" => self.runs = positive(value)?,
            "master_seed" => self.master_seed = number(value)?,
            "output_dir" => {
                if value.is_empty() {
                    return Err("output_dir must not be empty".into());
                }
                self.output_dir = PathBuf::from(value);
            }
            "checkpoint_every" => self.checkpoint_every = number(value)?,
            "metric_every" => self.metric_every = positive(value)?,
            _ => {
                return Err(format!("unknown key `{key}` (known keys: {})", KEYS.join(", ")));
            }
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut lr_sender_set = false;
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "missing key".into(),
                });
            }
            if seen.contains(&key) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            cfg.set(key, value, &mut lr_sender_set)
                .map_err(|msg| Error::Parse { line, msg })?;
            seen.push(key);
        }
        if !lr_sender_set && cfg.sender == SenderKind::TargetInContext {
            cfg.es.learning_rate_sender = TC_SENDER_LEARNING_RATE;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn budget_name(b: EpisodeBudget) -> &'static str {
    match b {
        EpisodeBudget::PerCandidate => "per_candidate",
        EpisodeBudget::PerIteration => "per_iteration",
    }
}

fn shaping_name(s: FitnessShaping) -> &'static str {
    match s {
        FitnessShaping::Raw => "raw",
        FitnessShaping::CenteredRank => "centered_rank",
    }
}

fn number<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

fn positive<T: FromStr + PartialOrd + Default + std::fmt::Display>(v: &str) -> std::result::Result<T, String> {
    let x: T = number(v)?;
    if x <= T::default() {
        return Err(format!("value must be positive, got {x}"));
    }
    Ok(x)
}

fn real(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = number(v)?;
    if !x.is_finite() {
        return Err(format!("value must be finite, got {v}"));
    }
    Ok(x)
}

fn non_negative(v: &str) -> std::result::Result<f64, String> {
    let x = real(v)?;
    if x < 0.0 {
        return Err(format!("value must be non-negative, got {x}"));
    }
    Ok(x)
}

fn strictly_positive(v: &str) -> std::result::Result<f64, String> {
    let x = real(v)?;
    if x <= 0.0 {
        return Err(format!("value must be positive, got {x}"));
    }
    Ok(x)
}
