//! Exact-chain and mean-field analytics.
//!
//! For models exposing a finite state enumeration the chain is solvable
//! outright: exact transition matrices, n-step laws by repeated squaring,
//! stationary distributions by a null-space solve (with a damped power
//! iteration fallback), analytic moments and autocovariances under the
//! stationary law, and a noise-free analytic objective surface that plugs
//! straight into the SMD classifier.
//!
//! The continuous-limit side is a one-dimensional stationary Fokker-Planck
//! solver with zero-flux boundaries, under the convention
//! `dX = Omega(X) dt + sqrt(2 D(X)) dW`, whose stationary density is
//! `p(x) ~ (1/D(x)) exp( integral_a^x Omega(u)/D(u) du )`.

use crate::dgp::{Model, ParamVector, SimConfig};
use crate::error::{Error, Result};
use crate::models::kirman_rates_real;
use crate::moments::{MomentSpec, MomentVector};
use crate::smd::{objective, GridSpec, ObjectiveSurface, SurfaceSource, WeightMatrix};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Row-stochastic one-step law over an ordered finite state list.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    /// State labels (Kirman: the agent count k as a float).
    pub labels: Vec<f64>,
    /// Observable value at each state.
    pub measure_values: Vec<f64>,
    pub probs: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn new(labels: Vec<f64>, measure_values: Vec<f64>, probs: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if probs.nrows() != n || probs.ncols() != n || measure_values.len() != n {
            return Err(Error::shape(
                format!("{n}x{n} matrix with {n} labels and measures"),
                format!(
                    "{}x{}, {} measures",
                    probs.nrows(),
                    probs.ncols(),
                    measure_values.len()
                ),
            ));
        }
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let p = probs[(i, j)];
                if !(-1e-15..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::numerical(
                        format!("transition probability P({i},{j}) = {p} outside [0, 1]"),
                        None,
                    ));
                }
                row_sum += p;
            }
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(Error::numerical(
                    format!("row {i} sums to {row_sum}, not 1"),
                    None,
                ));
            }
        }
        Ok(TransitionMatrix {
            labels,
            measure_values,
            probs,
        })
    }

    /// Matrix from plain rows, labels 0..n, measure = labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let labels: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        Self::new(labels.clone(), labels, DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }
}

/// Exact one-step transition matrix of an enumerable model.
pub fn transition_matrix(
    model: &dyn Model,
    params: &ParamVector,
    config: &SimConfig,
) -> Result<TransitionMatrix> {
    params.validate()?;
    let chain = model
        .enumerate_states(params, config)
        .ok_or(Error::Capability {
            model: model.name().to_string(),
        })?;
    let n = chain.labels.len();
    let flat: Vec<f64> = chain.probs.iter().flatten().cloned().collect();
    TransitionMatrix::new(
        chain.labels,
        chain.measure_values,
        DMatrix::from_row_slice(n, n, &flat),
    )
}

/// n-step law `P^n` by repeated squaring.
pub fn n_step(p: &TransitionMatrix, n: usize) -> Result<TransitionMatrix> {
    if n < 1 {
        return Err(Error::config("n_step requires n >= 1"));
    }
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = p.probs.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r * &base,
            });
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    let probs = result.expect("n >= 1");
    // renormalization is not applied; stochasticity survives squaring to
    // rounding, which the constructor tolerance covers
    TransitionMatrix::new(p.labels.clone(), p.measure_values.clone(), probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    LinearSolve,
    PowerIteration,
}

/// Stationary distribution with its residual `|| pi P - pi ||_1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub method: SolveMethod,
}

const RANK_TOL: f64 = 1e-9;

/// Solve `pi P = pi, sum pi = 1`.
///
/// The primary route inspects the null space of `P' - I`: a null space of
/// dimension two or more means the chain is reducible and supports several
/// stationary distributions, which is returned as `MultipleStationary`
/// carrying a null-space basis. The power-iteration fallback applies a 0.99
/// damping factor so periodic chains still converge.
pub fn stationary_distribution(p: &TransitionMatrix, tol: f64) -> Result<StationaryDistribution> {
    stationary_with_method(p, tol, SolveMethod::LinearSolve)
}

pub fn stationary_with_method(
    p: &TransitionMatrix,
    tol: f64,
    method: SolveMethod,
) -> Result<StationaryDistribution> {
    match method {
        SolveMethod::LinearSolve => stationary_linear(p, tol),
        SolveMethod::PowerIteration => stationary_power(p, tol),
    }
}

fn stationary_linear(p: &TransitionMatrix, tol: f64) -> Result<StationaryDistribution> {
    let n = p.n_states();
    let a = p.probs.transpose() - DMatrix::identity(n, n);
    let svd = a.svd(true, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let null_cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < RANK_TOL)
        .collect();

    if null_cols.len() > 1 {
        let basis = null_cols
            .iter()
            .map(|&i| v_t.row(i).iter().cloned().collect())
            .collect();
        return Err(Error::MultipleStationary { basis });
    }

    // smallest singular value's right singular vector spans the null space
    let min_idx = (0..svd.singular_values.len())
        .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
        .expect("nonempty");
    let mut pi: Vec<f64> = v_t.row(min_idx).iter().cloned().collect();
    let sum: f64 = pi.iter().sum();
    if sum < 0.0 {
        pi.iter_mut().for_each(|x| *x = -*x);
    }
    for x in pi.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-8 {
                return Err(Error::numerical(
                    format!("stationary solve produced entry {x}"),
                    None,
                ));
            }
            *x = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);

    let residual = residual_l1(p, &pi);
    if residual > tol {
        // polish with the damped power iteration before giving up
        let polished = power_iterate(p, pi, tol);
        let residual = residual_l1(p, &polished);
        if residual > tol {
            return Err(Error::numerical(
                format!("stationary residual {residual} exceeds tolerance {tol}"),
                None,
            ));
        }
        return Ok(StationaryDistribution {
            pi: polished,
            residual,
            method: SolveMethod::LinearSolve,
        });
    }
    Ok(StationaryDistribution {
        pi,
        residual,
        method: SolveMethod::LinearSolve,
    })
}

fn stationary_power(p: &TransitionMatrix, tol: f64) -> Result<StationaryDistribution> {
    let n = p.n_states();
    let pi = power_iterate(p, vec![1.0 / n as f64; n], tol);
    let residual = residual_l1(p, &pi);
    if residual > tol {
        return Err(Error::numerical(
            format!("power iteration stalled at residual {residual}"),
            None,
        ));
    }
    Ok(StationaryDistribution {
        pi,
        residual,
        method: SolveMethod::PowerIteration,
    })
}

/// Damped power iteration `pi <- pi (0.01 I + 0.99 P)`.
fn power_iterate(p: &TransitionMatrix, start: Vec<f64>, tol: f64) -> Vec<f64> {
    let damping = 0.99;
    let n = p.n_states();
    let mut pi = start;
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        for (i, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (nj, pij) in next.iter_mut().zip(p.probs.row(i).iter()) {
                *nj += w * pij;
            }
        }
        for (nj, &pj) in next.iter_mut().zip(pi.iter()) {
            *nj = damping * *nj + (1.0 - damping) * pj;
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < tol * 1e-2 {
            break;
        }
    }
    pi
}

fn residual_l1(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    let n = p.n_states();
    let mut res = 0.0;
    for j in 0..n {
        let pj: f64 = pi
            .iter()
            .zip(p.probs.column(j).iter())
            .map(|(w, pij)| w * pij)
            .sum();
        res += (pj - pi[j]).abs();
    }
    res
}

/// Raw moments of the observable under the stationary law:
/// `raw[m] = sum_s pi(s) g(s)^m`.
///
/// `sample_size` is set to the state count; analytic vectors carry no
/// sampling noise.
pub fn analytic_moments(
    pi: &StationaryDistribution,
    measure: &[f64],
    m: usize,
) -> Result<MomentVector> {
    analytic_moment_vector(pi, None, measure, &MomentSpec::raw(m))
}

/// Analytic moment vector under a full `MomentSpec`, including exact
/// autocovariances `gamma_l = sum_{s,s'} pi(s) (g(s)-mu) P^l(s,s') (g(s')-mu)`
/// when lags are requested (the transition matrix must then be supplied).
pub fn analytic_moment_vector(
    pi: &StationaryDistribution,
    p: Option<&TransitionMatrix>,
    measure: &[f64],
    spec: &MomentSpec,
) -> Result<MomentVector> {
    if spec.m < 1 {
        return Err(Error::config("moment order M must be >= 1"));
    }
    if measure.len() != pi.pi.len() {
        return Err(Error::shape(
            format!("{} measure values", pi.pi.len()),
            format!("{}", measure.len()),
        ));
    }
    let mean: f64 = pi.pi.iter().zip(measure).map(|(w, g)| w * g).sum();
    let mut raw = Vec::with_capacity(spec.m);
    for m in 1..=spec.m {
        let v = if spec.central && m >= 2 {
            pi.pi
                .iter()
                .zip(measure)
                .map(|(w, g)| w * (g - mean).powi(m as i32))
                .sum()
        } else {
            pi.pi
                .iter()
                .zip(measure)
                .map(|(w, g)| w * g.powi(m as i32))
                .sum()
        };
        raw.push(v);
    }

    let mut autocov = Vec::with_capacity(spec.lags.len());
    if !spec.lags.is_empty() {
        let p =
            p.ok_or_else(|| Error::config("autocovariance lags require the transition matrix"))?;
        let centered: Vec<f64> = measure.iter().map(|g| g - mean).collect();
        for &lag in &spec.lags {
            if lag == 0 {
                return Err(Error::config("autocovariance lag must be >= 1"));
            }
            let pl = n_step(p, lag)?;
            let mut g = 0.0;
            for (i, (w, c)) in pi.pi.iter().zip(&centered).enumerate() {
                let wi = w * c;
                if wi == 0.0 {
                    continue;
                }
                g += wi
                    * pl.probs
                        .row(i)
                        .iter()
                        .zip(&centered)
                        .map(|(pij, cj)| pij * cj)
                        .sum::<f64>();
            }
            autocov.push(g);
        }
    }

    Ok(MomentVector {
        raw,
        autocov,
        spec: spec.clone(),
        sample_size: pi.pi.len(),
    })
}

/// Noise-free objective surface from the exact chain.
///
/// Every grid node gets the analytic stationary moments of the enumerated
/// chain at that parameter vector; nodes where the chain is reducible or
/// not enumerable are marked invalid. The result shares the simulated
/// surface schema and feeds `classify` directly.
pub fn analytic_objective(
    model: &dyn Model,
    base: &ParamVector,
    grid: &GridSpec,
    config: &SimConfig,
    target: &MomentVector,
    w: &WeightMatrix,
) -> Result<ObjectiveSurface> {
    for d in &grid.dims {
        if base.index_of(&d.name).is_none() {
            return Err(Error::config(format!(
                "grid dimension `{}` is not a parameter of the model",
                d.name
            )));
        }
    }
    // fail fast when the model cannot enumerate at the base point
    let _ = transition_matrix(model, base, config)?;

    let n = grid.node_count();
    let results: Vec<(f64, bool, Option<String>)> = (0..n)
        .into_par_iter()
        .map(|node| {
            let eval = || -> Result<f64> {
                let params = grid.params_at(base, node)?;
                let p = transition_matrix(model, &params, config)?;
                let pi = stationary_distribution(&p, 1e-10)?;
                let mv = analytic_moment_vector(&pi, Some(&p), &p.measure_values, &target.spec)?;
                objective(target, &mv, w)
            };
            match eval() {
                Ok(j) => (j, true, None),
                Err(e) => (f64::NAN, false, Some(e.to_string())),
            }
        })
        .collect();

    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut node_errors = Vec::with_capacity(n);
    for (j, ok, err) in results {
        values.push(j);
        valid.push(ok);
        node_errors.push(err);
    }
    Ok(ObjectiveSurface {
        grid: grid.clone(),
        base_params: base.clone(),
        values,
        valid,
        node_errors,
        moment_spec: target.spec.clone(),
        weight: w.clone(),
        master_seed: config.master_seed,
        crn: true,
        config: config.clone(),
        source: SurfaceSource::Analytic,
        boundary_warning: false,
    })
}

/// One-dimensional stationary Fokker-Planck problem on `[a, b]` with
/// zero-flux boundaries, `dX = drift dt + sqrt(2 diffusion) dW`.
pub struct FpSpec {
    pub drift: Box<dyn Fn(f64) -> f64 + Sync>,
    pub diffusion: Box<dyn Fn(f64) -> f64 + Sync>,
    pub domain: (f64, f64),
    pub grid_points: usize,
    /// Diffusion floor: D(x) below this is a singular-diffusion error.
    pub d_min: f64,
}

impl FpSpec {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Sync + 'static,
        domain: (f64, f64),
        grid_points: usize,
    ) -> Self {
        FpSpec {
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            domain,
            grid_points,
            d_min: 1e-12,
        }
    }
}

/// Discretized stationary density on a regular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpDensity {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
}

impl FpDensity {
    pub fn trapezoid(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.xs.len() {
            let h = self.xs[i] - self.xs[i - 1];
            acc +=
                0.5 * h * (f(self.xs[i - 1], self.density[i - 1]) + f(self.xs[i], self.density[i]));
        }
        acc
    }

    pub fn integral(&self) -> f64 {
        self.trapezoid(|_, p| p)
    }

    pub fn mean(&self) -> f64 {
        self.trapezoid(|x, p| x * p)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.trapezoid(|x, p| (x - m) * (x - m) * p)
    }
}

/// Stationary solution `p(x) ~ (1/D(x)) exp( int_a^x Omega/D du )`,
/// computed by trapezoidal quadrature of the drift/diffusion ratio and
/// normalized to unit mass on the domain.
pub fn fp_stationary_density(spec: &FpSpec) -> Result<FpDensity> {
    if spec.grid_points < 3 {
        return Err(Error::config("fokker-planck grid needs at least 3 points"));
    }
    let (a, b) = spec.domain;
    if a.is_nan() || b.is_nan() || a >= b {
        return Err(Error::config("fokker-planck domain must satisfy a < b"));
    }
    let n = spec.grid_points;
    let h = (b - a) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();

    let mut ratio = Vec::with_capacity(n);
    for &x in &xs {
        let d = (spec.diffusion)(x);
        if d.is_nan() || d < spec.d_min {
            return Err(Error::SingularDiffusion {
                x,
                value: d,
                d_min: spec.d_min,
            });
        }
        ratio.push((spec.drift)(x) / d);
    }

    let mut phi = vec![0.0; n];
    for i in 1..n {
        phi[i] = phi[i - 1] + 0.5 * h * (ratio[i - 1] + ratio[i]);
    }
    let phi_max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = xs
        .iter()
        .zip(&phi)
        .map(|(&x, &p)| (p - phi_max).exp() / (spec.diffusion)(x))
        .collect();

    let mut z = 0.0;
    for i in 1..n {
        z += 0.5 * h * (density[i - 1] + density[i]);
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::numerical(format!("density normalization {z}"), None));
    }
    density.iter_mut().for_each(|p| *p /= z);
    Ok(FpDensity { xs, density })
}

/// Diffusion-limit drift and diffusion of the Kirman chain, from the exact
/// birth-death rates evaluated at real-valued k = xN: per-step jumps of
/// size 1/N give `Omega(x) = (u - d)/N` and `D(x) = (u + d)/(2 N^2)`.
pub fn kirman_fp_spec(n_agents: usize, epsilon: f64, delta: f64, grid_points: usize) -> FpSpec {
    let n = n_agents as f64;
    FpSpec::new(
        move |x| {
            let (up, down) = kirman_rates_real(x * n, n, epsilon, delta);
            (up - down) / n
        },
        move |x| {
            let (up, down) = kirman_rates_real(x * n, n, epsilon, delta);
            (up + down) / (2.0 * n * n)
        },
        (0.0, 1.0),
        grid_points,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Kirman;
    use crate::rng::StreamRng;

    fn kirman_matrix(n: usize, eps: f64, delta: f64) -> TransitionMatrix {
        let model = Kirman::default();
        let mut params = model.default_params();
        params.set("epsilon", eps).unwrap();
        params.set("delta", delta).unwrap();
        let config = SimConfig::new(n, 1, 1, 1);
        transition_matrix(&model, &params, &config).unwrap()
    }

    fn random_stochastic(n: usize, rng: &mut StreamRng) -> TransitionMatrix {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..n).map(|_| rng.uniform01() + 0.01).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            // fix the last entry so the row sums to exactly 1
            let partial: f64 = row[..n - 1].iter().sum();
            row[n - 1] = 1.0 - partial;
            rows.push(row);
        }
        TransitionMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn model_without_enumeration_is_a_capability_error() {
        let config = SimConfig::new(1, 10, 1, 1);
        let err = transition_matrix(
            &crate::models::Ar1,
            &crate::models::Ar1.default_params(),
            &config,
        )
        .unwrap_err();
        match err {
            Error::Capability { model } => assert_eq!(model, "ar1"),
            other => panic!("expected capability error, got {other}"),
        }
    }

    #[test]
    fn frozen_kirman_chain_is_the_identity_matrix() {
        let p = kirman_matrix(6, 0.0, 1.0);
        for i in 0..p.n_states() {
            for j in 0..p.n_states() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((p.probs[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_step_power_is_the_matrix_itself() {
        let p = kirman_matrix(5, 0.1, 0.8);
        let q = n_step(&p, 1).unwrap();
        assert_eq!(p.probs, q.probs);
    }

    #[test]
    fn period_two_swap_chain_squares_to_identity() {
        let p = TransitionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let q = n_step(&p, 2).unwrap();
        assert!((q.probs[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((q.probs[(1, 1)] - 1.0).abs() < 1e-15);
    }

    // Brute-force oracle: naive 7-fold multiplication.
    #[test]
    fn repeated_squaring_matches_naive_powers() {
        let mut rng = StreamRng::from_seed(7);
        let p = random_stochastic(5, &mut rng);
        let fast = n_step(&p, 7).unwrap();
        let mut naive = p.probs.clone();
        for _ in 1..7 {
            naive = &naive * &p.probs;
        }
        let max_diff = (&fast.probs - &naive)
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(max_diff <= 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn chapman_kolmogorov_holds() {
        let mut rng = StreamRng::from_seed(15);
        for _ in 0..5 {
            let p = random_stochastic(5, &mut rng);
            let left = n_step(&p, 9).unwrap();
            let right = n_step(&p, 4).unwrap().probs * n_step(&p, 5).unwrap().probs;
            let max_diff = (&left.probs - &right)
                .iter()
                .fold(0.0f64, |a, &v| a.max(v.abs()));
            assert!(max_diff <= 1e-10, "max diff {max_diff}");
        }
    }

    #[test]
    fn two_state_stationary_matches_closed_form() {
        // P = [[1-a, a], [b, 1-b]] has pi = (b, a)/(a+b)
        let (a, b) = (0.3, 0.6);
        let p = TransitionMatrix::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap();
        let pi = stationary_distribution(&p, 1e-10).unwrap();
        assert!((pi.pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi.pi[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(pi.residual <= 1e-10);
    }

    #[test]
    fn absorbing_kirman_reports_multiple_stationary_distributions() {
        let p = kirman_matrix(10, 0.0, 0.8);
        match stationary_distribution(&p, 1e-10) {
            Err(Error::MultipleStationary { basis }) => assert!(basis.len() >= 2),
            other => panic!("expected MultipleStationary, got {other:?}"),
        }
    }

    #[test]
    fn linear_solve_and_power_iteration_agree() {
        let p = kirman_matrix(10, 0.1, 0.8);
        let a = stationary_distribution(&p, 1e-10).unwrap();
        let b = stationary_with_method(&p, 1e-10, SolveMethod::PowerIteration).unwrap();
        let l1: f64 = a.pi.iter().zip(&b.pi).map(|(x, y)| (x - y).abs()).sum();
        assert!(l1 <= 1e-10, "l1 distance {l1}");
    }

    #[test]
    fn periodic_chain_power_iteration_still_converges() {
        let p = TransitionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let pi = stationary_with_method(&p, 1e-10, SolveMethod::PowerIteration).unwrap();
        assert!((pi.pi[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ergodic_rows_converge_to_the_stationary_distribution() {
        let p = kirman_matrix(10, 0.1, 0.8);
        let pi = stationary_distribution(&p, 1e-10).unwrap();
        let mut n = 1usize;
        let mut achieved = None;
        while n <= 1 << 22 {
            let pn = n_step(&p, n).unwrap();
            let worst = (0..pn.n_states())
                .map(|i| {
                    (0..pn.n_states())
                        .map(|j| (pn.probs[(i, j)] - pi.pi[j]).abs())
                        .sum::<f64>()
                })
                .fold(0.0f64, f64::max);
            if worst <= 1e-8 {
                achieved = Some(n);
                break;
            }
            n *= 2;
        }
        match achieved {
            Some(n) => println!("all rows within 1e-8 of pi at n = {n}"),
            None => panic!("rows did not converge by n = {n}"),
        }
    }

    #[test]
    fn point_mass_moments_are_powers_of_the_atom() {
        let pi = StationaryDistribution {
            pi: vec![0.0, 1.0, 0.0],
            residual: 0.0,
            method: SolveMethod::LinearSolve,
        };
        let mv = analytic_moments(&pi, &[1.0, 0.7, 3.0], 3).unwrap();
        for m in 1..=3usize {
            assert!((mv.raw[m - 1] - 0.7f64.powi(m as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_two_point_moments_are_one_half() {
        let pi = StationaryDistribution {
            pi: vec![0.5, 0.5],
            residual: 0.0,
            method: SolveMethod::LinearSolve,
        };
        let mv = analytic_moments(&pi, &[0.0, 1.0], 4).unwrap();
        assert_eq!(mv.raw, vec![0.5; 4]);
    }

    #[test]
    fn kirman_stationary_mean_is_one_half_by_symmetry() {
        let p = kirman_matrix(10, 0.1, 0.8);
        let pi = stationary_distribution(&p, 1e-10).unwrap();
        let mv = analytic_moments(&pi, &p.measure_values, 1).unwrap();
        assert!((mv.raw[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn analytic_lag_one_autocovariance_is_positive_and_below_variance() {
        let p = kirman_matrix(10, 0.1, 0.8);
        let pi = stationary_distribution(&p, 1e-10).unwrap();
        let spec = MomentSpec::with_lags(2, &[1]);
        let mv = analytic_moment_vector(&pi, Some(&p), &p.measure_values, &spec).unwrap();
        let var = mv.raw[1] - mv.raw[0] * mv.raw[0];
        assert!(mv.autocov[0] > 0.0);
        assert!(mv.autocov[0] < var);
    }

    #[test]
    fn ou_process_recovers_the_standard_gaussian() {
        let spec = FpSpec::new(|x| -x, |_| 1.0, (-8.0, 8.0), 2001);
        let d = fp_stationary_density(&spec).unwrap();
        assert!((d.integral() - 1.0).abs() <= 1e-8);
        assert!(d.mean().abs() <= 1e-10, "mean {}", d.mean());
        assert!((d.variance() - 1.0).abs() <= 1e-3, "var {}", d.variance());
    }

    #[test]
    fn zero_drift_gives_the_uniform_density() {
        let spec = FpSpec::new(|_| 0.0, |_| 0.7, (2.0, 5.0), 301);
        let d = fp_stationary_density(&spec).unwrap();
        for &p in &d.density {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_diffusion_is_a_singular_diffusion_error() {
        let spec = FpSpec::new(|_| 0.0, |x| x, (0.0, 1.0), 11);
        assert!(matches!(
            fp_stationary_density(&spec),
            Err(Error::SingularDiffusion { .. })
        ));
    }

    #[test]
    fn kirman_diffusion_limit_tracks_the_exact_chain() {
        let (n, eps, delta) = (50usize, 0.1, 0.8);
        let p = kirman_matrix(n, eps, delta);
        let pi = stationary_distribution(&p, 1e-10).unwrap();

        // evaluate the FP density at the lattice points k/N and compare the
        // normalized masses against the exact stationary law
        let per_cell = 20usize;
        let spec = kirman_fp_spec(n, eps, delta, per_cell * n + 1);
        let d = fp_stationary_density(&spec).unwrap();
        let masses: Vec<f64> = (0..=n).map(|k| d.density[k * per_cell]).collect();
        let z: f64 = masses.iter().sum();
        let l1: f64 = masses
            .iter()
            .zip(&pi.pi)
            .map(|(m, p)| (m / z - p).abs())
            .sum();
        assert!(l1 <= 0.05, "l1 distance {l1}");
    }
}
