//! Toy models with engineered moment structure.
//!
//! Each toy realizes one identification regime with a closed-form moment
//! structure so the diagnostics can be checked against known answers:
//!
//! * [`Ar1`]: `Y' = rho Y + sigma (1-eta) xi`. Stationary law N(0, v) with
//!   `v = sigma^2 (1-eta)^2 / (1 - rho^2)`; lag-1 autocovariance `rho v`.
//!   The positive control: identified once the moment set pins both the
//!   stationary variance and the autocorrelation time.
//! * [`ProductOnly`]: `Y = theta1 theta2 + (1-eta) xi`, i.i.d. The law
//!   depends on the product only, so the objective has an exact ridge
//!   along `theta1 theta2 = const`.
//! * [`UnusedParam`]: `Y = theta1 + theta2 (1-eta) xi`, i.i.d.; `theta3`
//!   never enters the process.
//! * [`TwoMinima`]: `Y = theta^2 + (1-eta) xi`, i.i.d.; the law is even in
//!   theta, so +a and -a are observationally equivalent.
//! * [`DispersionOnly`]: `Y_j = mu + sigma (1-eta) s_j` with `s_j = -s_{j-1}`
//!   a deterministic alternating sign carried in the state. Over any
//!   even-length window the sample mean is `mu` to rounding, so `sigma`
//!   enters the first moment not at all and the second moment as
//!   `mu^2 + sigma^2 (1-eta)^2` exactly.

use crate::dgp::{MicroState, Model, ParamVector, SimConfig, StepCtx};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Ar1;

impl Model for Ar1 {
    fn name(&self) -> &str {
        "ar1"
    }

    fn default_params(&self) -> ParamVector {
        // bounds deliberately wider than the stationary region so that
        // |rho| >= 1 is reported as a stationarity error, not a bounds error
        ParamVector::from_entries(&[("rho", 0.5, -2.0, 2.0), ("sigma", 1.0, 0.0, 10.0)])
            .expect("static template")
    }

    fn validate(&self, params: &ParamVector, _config: &SimConfig) -> Result<()> {
        let rho = params.require("rho")?;
        if rho.abs() >= 1.0 {
            return Err(Error::Stationarity(format!(
                "ar1 requires |rho| < 1, got rho = {rho}"
            )));
        }
        Ok(())
    }

    fn init_state(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        MicroState::new(vec![0.0])
    }

    fn dispersed_init(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
        replicate: usize,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        let x0 = if replicate.is_multiple_of(2) {
            -10.0
        } else {
            10.0
        };
        MicroState::new(vec![x0])
    }

    fn transition(
        &self,
        state: &MicroState,
        params: &ParamVector,
        ctx: &mut StepCtx,
    ) -> MicroState {
        let rho = params.get("rho").unwrap_or(0.0);
        let sigma = params.get("sigma").unwrap_or(1.0);
        state.advanced(vec![rho * state.agents[0] + sigma * ctx.noise()])
    }

    fn measure(&self, state: &MicroState, _params: &ParamVector) -> f64 {
        state.agents[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProductOnly;

impl Model for ProductOnly {
    fn name(&self) -> &str {
        "product"
    }

    fn default_params(&self) -> ParamVector {
        ParamVector::from_entries(&[("theta1", 2.0, 0.1, 10.0), ("theta2", 3.0, 0.1, 10.0)])
            .expect("static template")
    }

    fn init_state(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        MicroState::new(vec![0.0])
    }

    fn transition(
        &self,
        state: &MicroState,
        params: &ParamVector,
        ctx: &mut StepCtx,
    ) -> MicroState {
        let p = params.get("theta1").unwrap_or(1.0) * params.get("theta2").unwrap_or(1.0);
        state.advanced(vec![p + ctx.noise()])
    }

    fn measure(&self, state: &MicroState, _params: &ParamVector) -> f64 {
        state.agents[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UnusedParam;

impl Model for UnusedParam {
    fn name(&self) -> &str {
        "unused"
    }

    fn default_params(&self) -> ParamVector {
        ParamVector::from_entries(&[
            ("theta1", 1.0, -5.0, 5.0),
            ("theta2", 1.0, 0.1, 5.0),
            ("theta3", 0.0, -5.0, 5.0),
        ])
        .expect("static template")
    }

    fn init_state(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        MicroState::new(vec![0.0])
    }

    fn transition(
        &self,
        state: &MicroState,
        params: &ParamVector,
        ctx: &mut StepCtx,
    ) -> MicroState {
        let mean = params.get("theta1").unwrap_or(0.0);
        let scale = params.get("theta2").unwrap_or(1.0);
        state.advanced(vec![mean + scale * ctx.noise()])
    }

    fn measure(&self, state: &MicroState, _params: &ParamVector) -> f64 {
        state.agents[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TwoMinima;

impl Model for TwoMinima {
    fn name(&self) -> &str {
        "twominima"
    }

    fn default_params(&self) -> ParamVector {
        ParamVector::from_entries(&[("theta", 1.0, -3.0, 3.0)]).expect("static template")
    }

    fn init_state(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        MicroState::new(vec![0.0])
    }

    fn transition(
        &self,
        state: &MicroState,
        params: &ParamVector,
        ctx: &mut StepCtx,
    ) -> MicroState {
        let theta = params.get("theta").unwrap_or(0.0);
        state.advanced(vec![theta * theta + ctx.noise()])
    }

    fn measure(&self, state: &MicroState, _params: &ParamVector) -> f64 {
        state.agents[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DispersionOnly;

impl Model for DispersionOnly {
    fn name(&self) -> &str {
        "dispersion"
    }

    fn default_params(&self) -> ParamVector {
        ParamVector::from_entries(&[("mu", 0.0, -5.0, 5.0), ("sigma", 1.0, 0.1, 5.0)])
            .expect("static template")
    }

    fn validate(&self, _params: &ParamVector, config: &SimConfig) -> Result<()> {
        if !config.horizon.is_multiple_of(2) {
            return Err(Error::config(
                "dispersion model requires an even horizon so alternating signs cancel exactly",
            ));
        }
        Ok(())
    }

    fn init_state(
        &self,
        _params: &ParamVector,
        _config: &SimConfig,
        _ctx: &mut StepCtx,
    ) -> MicroState {
        // agents = [observable, phase]
        MicroState::new(vec![0.0, -1.0])
    }

    fn transition(
        &self,
        state: &MicroState,
        params: &ParamVector,
        ctx: &mut StepCtx,
    ) -> MicroState {
        let mu = params.get("mu").unwrap_or(0.0);
        let sigma = params.get("sigma").unwrap_or(1.0);
        let phase = -state.agents[1];
        state.advanced(vec![mu + sigma * ctx.noise_factor() * phase, phase])
    }

    fn measure(&self, state: &MicroState, _params: &ParamVector) -> f64 {
        state.agents[0]
    }
}
