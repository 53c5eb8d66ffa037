//! Simulated moments and the ergodicity diagnostic.
//!
//! Moment vectors hold the first M non-centered moments of an observable
//! series, `raw[m] = (1/T) sum_j Y_j^m`, optionally extended with
//! autocovariances at configured lags (needed whenever the marginal moments
//! alone cannot separate level from persistence) and optionally switched to
//! central moments for m >= 2.

use crate::dgp::Trajectory;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// What to compute: M power moments, autocovariance lags, central switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub m: usize,
    #[serde(default)]
    pub lags: Vec<usize>,
    /// When true, moments of order >= 2 are central; the first stays a mean.
    #[serde(default)]
    pub central: bool,
}

impl MomentSpec {
    pub fn raw(m: usize) -> Self {
        MomentSpec {
            m,
            lags: Vec::new(),
            central: false,
        }
    }

    pub fn with_lags(m: usize, lags: &[usize]) -> Self {
        MomentSpec {
            m,
            lags: lags.to_vec(),
            central: false,
        }
    }

    /// Total length of the stacked statistic vector.
    pub fn len(&self) -> usize {
        self.m + self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Moments of one trajectory or pooled over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    /// `raw[i]` is the moment of order i+1.
    pub raw: Vec<f64>,
    /// Autocovariances at `spec.lags`, in order.
    pub autocov: Vec<f64>,
    pub spec: MomentSpec,
    pub sample_size: usize,
}

impl MomentVector {
    /// Moments and autocovariances stacked into one statistic vector, in the
    /// order (raw 1..M, autocov per lag).
    pub fn stacked(&self) -> Vec<f64> {
        let mut out = self.raw.clone();
        out.extend_from_slice(&self.autocov);
        out
    }

    pub fn len(&self) -> usize {
        self.raw.len() + self.autocov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Moments of a single trajectory under `spec`.
pub fn moments(trajectory: &Trajectory, spec: &MomentSpec) -> Result<MomentVector> {
    if spec.m < 1 {
        return Err(Error::config("moment order M must be >= 1"));
    }
    if trajectory.is_empty() {
        return Err(Error::config("trajectory is empty"));
    }
    let y = &trajectory.observables;
    let t = y.len() as f64;
    let mean = y.iter().sum::<f64>() / t;

    let mut raw = Vec::with_capacity(spec.m);
    for m in 1..=spec.m {
        let value = if spec.central && m >= 2 {
            y.iter().map(|v| (v - mean).powi(m as i32)).sum::<f64>() / t
        } else {
            y.iter().map(|v| v.powi(m as i32)).sum::<f64>() / t
        };
        if !value.is_finite() {
            return Err(Error::numerical(
                format!("moment m={m} is not finite"),
                None,
            ));
        }
        raw.push(value);
    }

    let mut autocov = Vec::with_capacity(spec.lags.len());
    for &lag in &spec.lags {
        if lag == 0 || lag >= y.len() {
            return Err(Error::config(format!(
                "autocovariance lag {lag} invalid for horizon {}",
                y.len()
            )));
        }
        // biased (1/T) estimator, standard for method-of-moments use
        let g = y
            .iter()
            .take(y.len() - lag)
            .zip(y.iter().skip(lag))
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / t;
        if !g.is_finite() {
            return Err(Error::numerical(
                format!("autocovariance lag {lag} is not finite"),
                None,
            ));
        }
        autocov.push(g);
    }

    Ok(MomentVector {
        raw,
        autocov,
        spec: spec.clone(),
        sample_size: y.len(),
    })
}

/// First M non-centered moments of one trajectory.
pub fn raw_moments(trajectory: &Trajectory, m: usize) -> Result<MomentVector> {
    moments(trajectory, &MomentSpec::raw(m))
}

/// Arithmetic mean of per-replicate moment vectors.
///
/// Per-component sums run over the replicate values sorted by magnitude, so
/// the result is exactly invariant under permutations of the replication
/// list.
pub fn pooled(replications: &[Trajectory], spec: &MomentSpec) -> Result<MomentVector> {
    if replications.is_empty() {
        return Err(Error::config("pooling requires at least one replication"));
    }
    let len0 = replications[0].len();
    if replications.iter().any(|t| t.len() != len0) {
        return Err(Error::shape(
            format!("all replications of length {len0}"),
            "mixed lengths".to_string(),
        ));
    }
    let per: Vec<MomentVector> = replications
        .iter()
        .map(|t| moments(t, spec))
        .collect::<Result<_>>()?;
    let s = per.len() as f64;

    let mean_component = |extract: &dyn Fn(&MomentVector) -> f64| {
        let mut vals: Vec<f64> = per.iter().map(extract).collect();
        vals.sort_by(f64::total_cmp);
        vals.iter().sum::<f64>() / s
    };

    let raw = (0..spec.m)
        .map(|i| mean_component(&move |v: &MomentVector| v.raw[i]))
        .collect();
    let autocov = (0..spec.lags.len())
        .map(|i| mean_component(&move |v: &MomentVector| v.autocov[i]))
        .collect();

    Ok(MomentVector {
        raw,
        autocov,
        spec: spec.clone(),
        sample_size: replications.len() * len0,
    })
}

/// Pooled first M non-centered moments.
pub fn pooled_moments(replications: &[Trajectory], m: usize) -> Result<MomentVector> {
    pooled(replications, &MomentSpec::raw(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErgodicityVerdict {
    Ergodic,
    NonErgodic,
    Inconclusive,
}

/// Outcome of the between-vs-within dispersion diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicityReport {
    /// Per moment order m = 1..M: between-replication standard deviation of
    /// the time-averaged moment divided by the median within-replication
    /// batch-means standard error.
    pub per_moment_ratio: Vec<f64>,
    pub verdict: ErgodicityVerdict,
    pub threshold_used: f64,
}

/// Test whether moments from different realizations tend to the same value.
///
/// The replications should be launched from dispersed initial conditions
/// (see `replicate_dispersed`): if time averages still agree across runs the
/// process forgets its initial state. Within-run standard errors use
/// non-overlapping batch means with `ceil(sqrt(T))` batches. A 0/0 ratio
/// (constant series everywhere) counts as 0, i.e. ergodic; a positive
/// between-run spread over exactly constant runs is infinite, i.e.
/// non-ergodic.
pub fn ergodicity_test(
    replications: &[Trajectory],
    m: usize,
    threshold: f64,
) -> Result<ErgodicityReport> {
    if replications.len() < 8 {
        return Err(Error::config(format!(
            "ergodicity test requires at least 8 replications, got {}",
            replications.len()
        )));
    }
    if m < 1 {
        return Err(Error::config("moment order M must be >= 1"));
    }
    let t = replications[0].len();
    if replications.iter().any(|r| r.len() != t) {
        return Err(Error::shape(
            format!("all replications of length {t}"),
            "mixed lengths".to_string(),
        ));
    }

    let mut ratios = Vec::with_capacity(m);
    for order in 1..=m {
        let powered: Vec<Vec<f64>> = replications
            .iter()
            .map(|traj| {
                traj.observables
                    .iter()
                    .map(|y| y.powi(order as i32))
                    .collect()
            })
            .collect();

        let time_avgs: Vec<f64> = powered
            .iter()
            .map(|z| z.iter().sum::<f64>() / z.len() as f64)
            .collect();
        let grand = time_avgs.iter().sum::<f64>() / time_avgs.len() as f64;
        let between = (time_avgs.iter().map(|a| (a - grand).powi(2)).sum::<f64>()
            / (time_avgs.len() - 1) as f64)
            .sqrt();

        let mut ses: Vec<f64> = powered.iter().map(|z| batch_means_se(z)).collect();
        ses.sort_by(f64::total_cmp);
        let within = ses[ses.len() / 2];

        let ratio = if between == 0.0 {
            0.0
        } else if within == 0.0 {
            f64::INFINITY
        } else {
            between / within
        };
        ratios.push(ratio);
    }

    let verdict = if ratios.iter().all(|&r| r <= threshold) {
        ErgodicityVerdict::Ergodic
    } else if ratios.iter().any(|&r| r > 3.0 * threshold) {
        ErgodicityVerdict::NonErgodic
    } else {
        ErgodicityVerdict::Inconclusive
    };

    Ok(ErgodicityReport {
        per_moment_ratio: ratios,
        verdict,
        threshold_used: threshold,
    })
}

/// Standard error of the series mean from non-overlapping batch means with
/// `ceil(sqrt(T))` batches.
fn batch_means_se(z: &[f64]) -> f64 {
    let t = z.len();
    let n_batches = (t as f64).sqrt().ceil() as usize;
    let size = (t / n_batches).max(1);
    let used = n_batches.min(t / size);
    if used < 2 {
        return 0.0;
    }
    let means: Vec<f64> = (0..used)
        .map(|b| z[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / used as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (used - 1) as f64;
    (var / used as f64).sqrt()
}
