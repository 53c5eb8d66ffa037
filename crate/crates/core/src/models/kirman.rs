//! Kirman's ant/herding model.
//!
//! N agents each hold a binary opinion. Per tick one uniformly chosen agent
//! acts: with probability `epsilon` it switches state spontaneously;
//! otherwise, with probability `1 - delta`, it meets one uniformly chosen
//! other agent and copies that agent's state. The second branch is gated on
//! the first not firing, so the per-tick conversion probability of a chosen
//! agent is `epsilon + (1 - epsilon) (1 - delta) k / (N - 1)` and stays a
//! probability on the whole `(epsilon, delta)` box.
//!
//! Because agents are exchangeable, the count k of agents in state 1 is a
//! birth-death chain on {0, ..., N}; `enumerate_states` exposes that exact
//! chain. The observable is the fraction k/N.

use crate::dgp::{EnumeratedChain, MicroState, Model, ParamVector, SimConfig, StepCtx};
use crate::error::{Error, Result};

/// Exact one-step birth/death probabilities of the agent-count chain.
///
/// Returns `(up, down)` for the current count `k`: `up` is the probability
/// the count moves to k+1, `down` to k-1. Everything else is the holding
/// probability.
pub fn kirman_rates(k: usize, n: usize, epsilon: f64, delta: f64) -> (f64, f64) {
    kirman_rates_real(k as f64, n as f64, epsilon, delta)
}

/// The same rates at real-valued k, for the diffusion limit.
pub fn kirman_rates_real(k: f64, n: f64, epsilon: f64, delta: f64) -> (f64, f64) {
    let convert = |other: f64| epsilon + (1.0 - epsilon) * (1.0 - delta) * other / (n - 1.0);
    let up = (n - k) / n * convert(k);
    let down = k / n * convert(n - k);
    (up, down)
}

#[derive(Debug, Clone)]
pub struct Kirman {
    /// Fraction of agents initialized to state 1 (deterministic init:
    /// the first `round(fraction * N)` agents start at 1).
    pub init_fraction: f64,
}

impl Default for Kirman {
    fn default() -> Self {
        Kirman { init_fraction: 0.5 }
    }
}

impl Kirman {
    pub fn starting_at(init_fraction: f64) -> Self {
        Kirman { init_fraction }
    }

    fn init_with_fraction(&self, n: usize, fraction: f64) -> MicroState {
        let k = (fraction * n as f64).round() as usize;
        let mut agents = vec![0.0; n];
        for a in agents.iter_mut().take(k.min(n)) {
            *a = 1.0;
        }
        MicroState::new(agents)
    }
}

impl Model for Kirman {
    fn name(&self) -> &str {
        "kirman"
    }

    fn default_params(&self) -> ParamVector {
        ParamVector::from_entries(&[("epsilon", 0.1, 0.0, 1.0), ("delta", 0.8, 0.0, 1.0)])
            .expect("static template")
    }

    fn validate(&self, _params: &ParamVector, config: &SimConfig) -> Result<()> {
        if config.n_agents < 2 {
            return Err(Error::config("kirman model requires at least 2 agents"));
        }
        Ok(())
    }

    fn init_state(
        &self,
        _params: &ParamVector,
        config: &SimConfig,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        self.init_with_fraction(config.n_agents, self.init_fraction)
    }

    fn dispersed_init(
        &self,
        _params: &ParamVector,
        config: &SimConfig,
        replicate: usize,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        // Alternate the two extreme consensus states across replicates.
        let fraction = if replicate.is_multiple_of(2) {
            0.0
        } else {
            1.0
        };
        self.init_with_fraction(config.n_agents, fraction)
    }

    fn transition(
        &self,
        state: &MicroState,
        params: &ParamVector,
        ctx: &mut StepCtx,
    ) -> MicroState {
        let epsilon = params.get("epsilon").unwrap_or(0.0);
        let delta = params.get("delta").unwrap_or(1.0);
        let n = state.n_agents();
        let i = ctx.rng.pick(n);
        let mut agents = state.agents.clone();
        if ctx.rng.uniform01() < epsilon {
            agents[i] = 1.0 - agents[i];
        } else if ctx.rng.uniform01() < 1.0 - delta {
            let j = ctx.rng.pick_other(n, i);
            agents[i] = agents[j];
        }
        state.advanced(agents)
    }

    fn measure(&self, state: &MicroState, _params: &ParamVector) -> f64 {
        state.agents.iter().sum::<f64>() / state.n_agents() as f64
    }

    fn enumerate_states(
        &self,
        params: &ParamVector,
        config: &SimConfig,
    ) -> Option<EnumeratedChain> {
        let n = config.n_agents;
        let epsilon = params.get("epsilon")?;
        let delta = params.get("delta")?;
        let mut probs = vec![vec![0.0; n + 1]; n + 1];
        for (k, row) in probs.iter_mut().enumerate() {
            let (up, down) = kirman_rates(k, n, epsilon, delta);
            if k < n {
                row[k + 1] = up;
            }
            if k > 0 {
                row[k - 1] = down;
            }
            row[k] = 1.0 - up - down;
        }
        Some(EnumeratedChain {
            labels: (0..=n).map(|k| k as f64).collect(),
            measure_values: (0..=n).map(|k| k as f64 / n as f64).collect(),
            probs,
        })
    }

    fn discrete_support(&self, _params: &ParamVector, config: &SimConfig) -> Option<Vec<f64>> {
        let n = config.n_agents;
        Some((0..=n).map(|k| k as f64 / n as f64).collect())
    }
}
