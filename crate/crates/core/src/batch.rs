//! Many environments stepped in lockstep.
//!
//! Every environment owns its state and derives all randomness from its own
//! seed and episode counter, so results do not depend on the number of worker
//! threads or on scheduling. Outputs are flat row-major buffers: observations
//! are `B x obs_len`, actions `B x (N + 1)`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionVector, ChargingEnv, EnvError, EnvState, StepInfo};
use crate::rng::{split, Phase, StreamKey};

type RowSlot<'a> = ((&'a mut EnvState, &'a [u32]), (&'a mut [f64], (&'a mut f64, &'a mut bool)));

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("{what} has length {got}, expected {expected}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("environment {index}: {source}")]
    Env { index: usize, source: EnvError },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Outputs of one batched step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep {
    pub obs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// With auto-reset on, a finished env's info is its terminal step.
    pub infos: Vec<StepInfo>,
}

pub struct BatchEnv {
    env: ChargingEnv,
    seeds: Vec<u64>,
    states: Vec<EnvState>,
    auto_reset: bool,
    pool: Option<ThreadPool>,
    workers: Option<usize>,
}

impl std::fmt::Debug for BatchEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchEnv")
            .field("batch", &self.seeds.len())
            .field("auto_reset", &self.auto_reset)
            .field("workers", &self.workers)
            .finish()
    }
}

impl BatchEnv {
    /// `batch` environments; env `i` uses seed `split(master_seed, i)`.
    pub fn new(env: ChargingEnv, batch: usize, master_seed: u64) -> Result<Self, BatchError> {
        let seeds = (0..batch as u64).map(|i| split(master_seed, i)).collect();
        Self::with_seeds(env, seeds)
    }

    /// One environment per explicit seed.
    pub fn with_seeds(env: ChargingEnv, seeds: Vec<u64>) -> Result<Self, BatchError> {
        if seeds.is_empty() {
            return Err(BatchError::EmptyBatch);
        }
        let states = seeds.iter().map(|&s| env.reset(s).0).collect();
        Ok(Self { env, seeds, states, auto_reset: true, pool: None, workers: None })
    }

    /// Number of worker threads: `Some(1)` steps sequentially, `None` uses
    /// the global rayon pool.
    pub fn set_workers(&mut self, workers: Option<usize>) -> Result<(), BatchError> {
        self.pool = match workers {
            Some(n) if n > 1 => {
                Some(ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| BatchError::Pool(e.to_string()))?)
            }
            _ => None,
        };
        self.workers = workers;
        Ok(())
    }

    pub fn set_auto_reset(&mut self, on: bool) {
        self.auto_reset = on;
    }

    pub fn env(&self) -> &ChargingEnv {
        &self.env
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn states(&self) -> &[EnvState] {
        &self.states
    }

    pub fn obs_len(&self) -> usize {
        self.env.obs_len()
    }

    pub fn action_len(&self) -> usize {
        self.env.action_len()
    }

    /// Resets every env to episode 0 and returns the `B x obs_len` observations.
    pub fn reset(&mut self) -> Vec<f64> {
        let mut obs = vec![0.0; self.len() * self.obs_len()];
        self.reset_into(&mut obs);
        obs
    }

    pub fn reset_into(&mut self, obs: &mut [f64]) {
        let n = self.obs_len();
        assert_eq!(obs.len(), self.len() * n, "observation buffer length");
        for ((state, &seed), row) in self.states.iter_mut().zip(&self.seeds).zip(obs.chunks_mut(n)) {
            *state = self.env.reset(seed).0;
            self.env.observe_into(state, row);
        }
    }

    pub fn step(&mut self, actions: &[u32]) -> Result<BatchStep, BatchError> {
        let b = self.len();
        let mut obs = vec![0.0; b * self.obs_len()];
        let mut rewards = vec![0.0; b];
        let mut dones = vec![false; b];
        let infos = self.step_into(actions, &mut obs, &mut rewards, &mut dones)?;
        Ok(BatchStep { obs, rewards, dones, infos })
    }

    /// Steps every env with its row of `actions`. Validates everything first,
    /// so on error no env has moved.
    pub fn step_into(
        &mut self,
        actions: &[u32],
        obs: &mut [f64],
        rewards: &mut [f64],
        dones: &mut [bool],
    ) -> Result<Vec<StepInfo>, BatchError> {
        let (b, a, n) = (self.len(), self.action_len(), self.obs_len());
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(BatchError::ShapeMismatch { what, expected, got })
            }
        };
        check("actions", b * a, actions.len())?;
        check("observation buffer", b * n, obs.len())?;
        check("reward buffer", b, rewards.len())?;
        check("done buffer", b, dones.len())?;
        let horizon = self.env.config().episode_steps;
        for (index, (state, row)) in self.states.iter().zip(actions.chunks(a)).enumerate() {
            if state.step >= horizon {
                return Err(BatchError::Env { index, source: EnvError::EpisodeDone });
            }
            self.env
                .validate_action(&ActionVector(row.to_vec()))
                .map_err(|source| BatchError::Env { index, source })?;
        }

        let env = &self.env;
        let auto_reset = self.auto_reset;
        let work = |((state, act), (obs_row, (reward, done))): RowSlot<'_>| {
            let (r, d, info) = env.step_state(state, &ActionVector(act.to_vec())).expect("validated action");
            if d && auto_reset {
                *state = env.reset_episode(state.seed, state.episode + 1).0;
            }
            env.observe_into(state, obs_row);
            *reward = r;
            *done = d;
            info
        };

        let infos = match (&self.pool, self.workers) {
            (_, Some(1)) => self
                .states
                .iter_mut()
                .zip(actions.chunks(a))
                .zip(obs.chunks_mut(n).zip(rewards.iter_mut().zip(dones.iter_mut())))
                .map(work)
                .collect(),
            (pool, _) => {
                let mut run = || {
                    self.states
                        .par_iter_mut()
                        .zip(actions.par_chunks(a))
                        .zip(obs.par_chunks_mut(n).zip(rewards.par_iter_mut().zip(dones.par_iter_mut())))
                        .map(work)
                        .collect()
                };
                match pool {
                    Some(p) => p.install(run),
                    None => run(),
                }
            }
        };
        Ok(infos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub batch: usize,
    pub workers: Option<usize>,
    /// Environment steps actually executed (a multiple of `batch`).
    pub total_steps: u64,
    pub wall_seconds: f64,
    pub steps_per_second: f64,
    pub hardware: String,
}

/// Runs uniform-random actions for at least `total_steps` env-steps with
/// auto-reset and times the stepping loop.
pub fn throughput_probe(
    env: &ChargingEnv,
    batch: usize,
    total_steps: u64,
    workers: Option<usize>,
    seed: u64,
) -> Result<ThroughputReport, BatchError> {
    if total_steps == 0 {
        return Err(BatchError::ShapeMismatch { what: "total_steps", expected: 1, got: 0 });
    }
    let mut batch_env = BatchEnv::new(env.clone(), batch, seed)?;
    batch_env.set_workers(workers)?;
    let iterations = total_steps.div_ceil(batch as u64);
    let a = batch_env.action_len();
    let max = 2 * env.config().discretization_k;
    let mut rng = StreamKey::new(seed).phase(Phase::Policy).stream();
    let mut actions = vec![0u32; batch * a];
    let mut obs = vec![0.0; batch * batch_env.obs_len()];
    let mut rewards = vec![0.0; batch];
    let mut dones = vec![false; batch];
    batch_env.reset_into(&mut obs);

    let start = Instant::now();
    for _ in 0..iterations {
        for x in actions.iter_mut() {
            *x = rng.random_range(0..=max);
        }
        batch_env.step_into(&actions, &mut obs, &mut rewards, &mut dones)?;
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    let steps = iterations * batch as u64;
    Ok(ThroughputReport {
        batch,
        workers,
        total_steps: steps,
        wall_seconds,
        steps_per_second: steps as f64 / wall_seconds.max(1e-9),
        hardware: hardware_note(),
    })
}

/// CPU model, logical core count, OS and architecture.
pub fn hardware_note() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    format!("{model}; {cores} logical cores; {} {}", std::env::consts::OS, std::env::consts::ARCH)
}
