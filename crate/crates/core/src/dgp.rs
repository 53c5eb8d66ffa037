//! Data-generating process layer.
//!
//! An agent-based model is represented as a seeded, time-homogeneous Markov
//! chain: a micro state `X_j` evolves through a transition rule that only
//! sees the current state, and a measurement projects each post-burn-in
//! state to a scalar observable `Y_j`. With a pseudo-random seed the whole
//! trajectory is a pure function of (model, params, config, seed), which is
//! what makes common-random-number sweeps and bit-exact replay possible.

use crate::error::{Error, Result};
use crate::rng::{derive, StreamRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One named structural parameter with its closed box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Ordered structural parameter vector with per-entry bounds.
///
/// Names are unique and every value stays inside its bounds; both are
/// enforced at construction and on every `set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    params: Vec<Param>,
}

impl ParamVector {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::config("parameter vector must have dimension >= 1"));
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::config(format!(
                    "duplicate parameter name `{}`",
                    p.name
                )));
            }
            if p.lo.is_nan() || p.hi.is_nan() || p.lo > p.hi {
                return Err(Error::config(format!(
                    "parameter `{}` has empty bounds [{}, {}]",
                    p.name, p.lo, p.hi
                )));
            }
            Self::check_bounds(p)?;
        }
        Ok(ParamVector { params })
    }

    /// Convenience constructor from `(name, value, lo, hi)` tuples.
    pub fn from_entries(entries: &[(&str, f64, f64, f64)]) -> Result<Self> {
        Self::new(
            entries
                .iter()
                .map(|&(name, value, lo, hi)| Param {
                    name: name.to_string(),
                    value,
                    lo,
                    hi,
                })
                .collect(),
        )
    }

    fn check_bounds(p: &Param) -> Result<()> {
        if !p.value.is_finite() || p.value < p.lo || p.value > p.hi {
            return Err(Error::Bounds {
                name: p.name.clone(),
                value: p.value,
                lo: p.lo,
                hi: p.hi,
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn entries(&self) -> &[Param] {
        &self.params
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// Like `get` but with a config error naming the missing entry.
    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    /// Set one entry, enforcing its bounds.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::config(format!("unknown parameter `{name}`")))?;
        let candidate = Param { value, ..p.clone() };
        Self::check_bounds(&candidate)?;
        p.value = value;
        Ok(())
    }

    /// Clone with one entry replaced.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        out.set(name, value)?;
        Ok(out)
    }

    /// Re-check every entry against its bounds (used before simulation).
    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            Self::check_bounds(p)?;
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }
}

/// Micro state of the chain: one value per agent plus the time index.
///
/// The transition rule receives only this struct, never the history, so the
/// Markov property holds by construction. The time index is advanced by the
/// simulation driver, not by models, which keeps the law time-homogeneous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroState {
    pub agents: Vec<f64>,
    pub time_index: u64,
}

impl MicroState {
    pub fn new(agents: Vec<f64>) -> Self {
        MicroState {
            agents,
            time_index: 0,
        }
    }

    /// Successor state with the same clock; the driver bumps `time_index`.
    pub fn advanced(&self, agents: Vec<f64>) -> Self {
        MicroState {
            agents,
            time_index: self.time_index,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }
}

/// Simulation configuration.
///
/// `noise_scale` is the eta of the noise term `(1 - eta) * xi`: eta = 0 is
/// full noise, eta = 1 switches every additive-noise model to its
/// deterministic skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_agents: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub noise_scale: f64,
}

impl SimConfig {
    /// Burn-in defaults to 10% of the horizon.
    pub fn new(n_agents: usize, horizon: usize, replications: usize, master_seed: u64) -> Self {
        SimConfig {
            n_agents,
            horizon,
            burn_in: horizon / 10,
            replications,
            master_seed,
            noise_scale: 0.0,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_noise_scale(mut self, eta: f64) -> Self {
        self.noise_scale = eta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_replications(mut self, s: usize) -> Self {
        self.replications = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications must be >= 1"));
        }
        if self.n_agents < 1 {
            return Err(Error::config("n_agents must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_scale) {
            return Err(Error::config("noise_scale must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-step context handed to models: the replicate's own RNG stream plus
/// the noise attenuation factor `1 - eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCtx {
    pub rng: StreamRng,
    noise_factor: f64,
}

impl StepCtx {
    pub fn new(seed: u64, noise_scale: f64) -> Self {
        StepCtx {
            rng: StreamRng::from_seed(seed),
            noise_factor: 1.0 - noise_scale,
        }
    }

    /// The white-noise term `(1 - eta) * xi` with xi standard normal.
    #[inline]
    pub fn noise(&mut self) -> f64 {
        self.noise_factor * self.rng.normal()
    }

    #[inline]
    pub fn noise_factor(&self) -> f64 {
        self.noise_factor
    }
}

/// One seeded realization of the observable series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub observables: Vec<f64>,
    pub seed_used: u64,
    pub params: ParamVector,
    pub burn_in_discarded: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }
}

/// A model as a Markov-chain data-generating process.
///
/// `transition` must read only the current state (memorylessness) and must
/// not depend on `time_index` (time homogeneity); the driver owns the clock.
pub trait Model: Sync {
    /// Registry name.
    fn name(&self) -> &str;

    /// Template parameter vector: names, default values, box bounds.
    fn default_params(&self) -> ParamVector;

    /// Model-specific validation beyond box bounds (e.g. stationarity).
    fn validate(&self, _params: &ParamVector, _config: &SimConfig) -> Result<()> {
        Ok(())
    }

    fn init_state(&self, params: &ParamVector, config: &SimConfig, ctx: &mut StepCtx)
        -> MicroState;

    /// Initial state for replicate `replicate` of a dispersed-start harness
    /// (used by the ergodicity test). Defaults to the ordinary init.
    fn dispersed_init(
        &self,
        params: &ParamVector,
        config: &SimConfig,
        _replicate: usize,
        ctx: &mut StepCtx,
    ) -> MicroState {
        self.init_state(params, config, ctx)
    }

    fn transition(&self, state: &MicroState, params: &ParamVector, ctx: &mut StepCtx)
        -> MicroState;

    fn measure(&self, state: &MicroState, params: &ParamVector) -> f64;

    /// Finite state enumeration with exact one-step probabilities, when the
    /// model supports it. Labels are model-level state identifiers (Kirman:
    /// the count k of agents in state 1), `measure_values` the observable at
    /// each state.
    fn enumerate_states(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
    ) -> Option<EnumeratedChain> {
        None
    }

    /// Atoms of the observable when it is discrete (drives histogram vs KDE
    /// density estimation).
    fn discrete_support(&self, _params: &ParamVector, _config: &SimConfig) -> Option<Vec<f64>> {
        None
    }
}

/// Exact finite-chain description returned by enumerable models.
#[derive(Debug, Clone)]
pub struct EnumeratedChain {
    pub labels: Vec<f64>,
    pub measure_values: Vec<f64>,
    /// Row-stochastic: `probs[i][j] = P(next = j | current = i)`.
    pub probs: Vec<Vec<f64>>,
}

enum InitKind<'a> {
    Default,
    Dispersed(usize),
    Explicit(&'a MicroState),
}

fn run_chain(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
    seed: u64,
    init: InitKind,
) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    model.validate(params, config)?;

    let mut ctx = StepCtx::new(seed, config.noise_scale);
    let mut state = match init {
        InitKind::Default => model.init_state(params, config, &mut ctx),
        InitKind::Dispersed(r) => model.dispersed_init(params, config, r, &mut ctx),
        InitKind::Explicit(s) => s.clone(),
    };

    // Convention: one transition per tick, measurement after the transition,
    // so Y_j = G(X_{burn_in + 1 + j}). Burn-in only shifts the recording
    // window; the state path for a given seed is independent of it.
    for _ in 0..config.burn_in {
        let next = model.transition(&state, params, &mut ctx);
        state = MicroState {
            agents: next.agents,
            time_index: state.time_index + 1,
        };
    }
    let mut observables = Vec::with_capacity(config.horizon);
    for j in 0..config.horizon {
        let next = model.transition(&state, params, &mut ctx);
        state = MicroState {
            agents: next.agents,
            time_index: state.time_index + 1,
        };
        let y = model.measure(&state, params);
        if !y.is_finite() {
            return Err(Error::numerical(
                format!("non-finite measurement {y}"),
                Some(config.burn_in + j),
            ));
        }
        observables.push(y);
    }
    Ok(Trajectory {
        observables,
        seed_used: seed,
        params: params.clone(),
        burn_in_discarded: config.burn_in,
    })
}

/// Simulate one trajectory. Pure function of (model, params, config, seed).
pub fn simulate(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
    seed: u64,
) -> Result<Trajectory> {
    run_chain(model, params, config, seed, InitKind::Default)
}

/// Simulate from an explicit initial micro state (same seed conventions).
pub fn simulate_from(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
    seed: u64,
    init: &MicroState,
) -> Result<Trajectory> {
    run_chain(model, params, config, seed, InitKind::Explicit(init))
}

/// Run `config.replications` independent trajectories.
///
/// Replicate `r` is seeded with `derive(master_seed, r)`; the output order
/// is fixed by the replicate index regardless of how the work is scheduled.
pub fn replicate(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
) -> Result<Vec<Trajectory>> {
    replicate_with(model, params, config, InitMode::Default)
}

/// Replicates started from model-defined dispersed initial conditions,
/// for ergodicity testing.
pub fn replicate_dispersed(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
) -> Result<Vec<Trajectory>> {
    replicate_with(model, params, config, InitMode::Dispersed)
}

#[derive(Clone, Copy)]
enum InitMode {
    Default,
    Dispersed,
}

fn replicate_with(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
    mode: InitMode,
) -> Result<Vec<Trajectory>> {
    config.validate()?;
    (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = derive(config.master_seed, r as u64);
            let init = match mode {
                InitMode::Default => InitKind::Default,
                InitMode::Dispersed => InitKind::Dispersed(r),
            };
            run_chain(model, params, config, seed, init).map_err(|e| e.in_replicate(r))
        })
        .collect()
}
