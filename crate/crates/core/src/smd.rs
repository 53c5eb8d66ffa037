//! Simulated minimum distance over a parameter grid.
//!
//! The objective is the quadratic form `J = (mu_R - mu_T)' W (mu_R - mu_T)`
//! between a target statistic vector and its simulated counterpart. The
//! protocol is surface exploration, not gradient descent: evaluate J on a
//! rectangular grid, locate minima, refine, take a finite-difference Hessian
//! at the best node, and classify the result into the four identification
//! failure modes or "identified".
//!
//! Common random numbers (the same replication seed set at every node) are
//! the default for sweeps and mandatory for Hessians: a simulated objective
//! with free-running seeds is not continuous in the parameters, while under
//! CRN it is smooth enough for finite differences.

use crate::dgp::{replicate, Model, ParamVector, SimConfig};
use crate::error::{Error, Result};
use crate::moments::{pooled, MomentSpec, MomentVector};
use crate::rng::derive;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Identity,
    DiagonalInverseVariance,
    FullInverseCovariance,
}

/// Positive semi-definite weighting matrix for the moment distance.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    pub kind: WeightKind,
    pub matrix: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn identity(n: usize) -> Self {
        WeightMatrix {
            kind: WeightKind::Identity,
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Validate symmetry (1e-12) and positive semi-definiteness; eigenvalues
    /// in [-1e-10, 0) are clipped to zero, anything lower is an error.
    pub fn from_matrix(kind: WeightKind, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::shape(
                "square weight matrix".to_string(),
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        let scale = matrix.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::config(format!(
                        "weight matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = matrix.clone().symmetric_eigen();
        let min_eig = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * scale.max(1.0) {
            return Err(Error::config(format!(
                "weight matrix not positive semi-definite (min eigenvalue {min_eig})"
            )));
        }
        let matrix = if min_eig < 0.0 {
            // clip the slightly negative part
            let mut vals = eig.eigenvalues.clone();
            for v in vals.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
        } else {
            matrix
        };
        Ok(WeightMatrix { kind, matrix })
    }

    /// Diagonal weights 1/Var from the dispersion of per-replicate moment
    /// vectors at the target. Variances are floored relative to the moment
    /// scale so an exactly-constant component cannot produce an infinite
    /// weight.
    pub fn diagonal_inverse_variance(per_replicate: &[MomentVector]) -> Result<Self> {
        if per_replicate.len() < 2 {
            return Err(Error::config(
                "diagonal inverse-variance weights need at least 2 replicates",
            ));
        }
        let n = per_replicate[0].len();
        if per_replicate.iter().any(|v| v.len() != n) {
            return Err(Error::shape(
                format!("{n} components"),
                "mixed lengths".to_string(),
            ));
        }
        let s = per_replicate.len() as f64;
        let mut m = DMatrix::zeros(n, n);
        for c in 0..n {
            let vals: Vec<f64> = per_replicate.iter().map(|v| v.stacked()[c]).collect();
            let mean = vals.iter().sum::<f64>() / s;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
            let floor = 1e-14 * (1.0 + mean * mean);
            m[(c, c)] = 1.0 / var.max(floor);
        }
        Ok(WeightMatrix {
            kind: WeightKind::DiagonalInverseVariance,
            matrix: m,
        })
    }

    /// Full inverse covariance of per-replicate moment vectors.
    pub fn full_inverse_covariance(per_replicate: &[MomentVector]) -> Result<Self> {
        if per_replicate.len() < 2 {
            return Err(Error::config(
                "inverse-covariance weights need at least 2 replicates",
            ));
        }
        let n = per_replicate[0].len();
        let s = per_replicate.len() as f64;
        let stacked: Vec<Vec<f64>> = per_replicate.iter().map(|v| v.stacked()).collect();
        let mean: Vec<f64> = (0..n)
            .map(|c| stacked.iter().map(|v| v[c]).sum::<f64>() / s)
            .collect();
        let mut cov = DMatrix::zeros(n, n);
        for v in &stacked {
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] += (v[i] - mean[i]) * (v[j] - mean[j]);
                }
            }
        }
        cov /= s - 1.0;
        // small ridge keeps near-singular covariances invertible
        let scale = cov.diagonal().iter().fold(0.0f64, |a, &v| a.max(v));
        for i in 0..n {
            cov[(i, i)] += 1e-12 * scale.max(1e-300);
        }
        let inv = cov
            .try_inverse()
            .ok_or_else(|| Error::numerical("singular moment covariance", None))?;
        Self::from_matrix(WeightKind::FullInverseCovariance, inv)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightMatrix {
            kind: self.kind,
            matrix: &self.matrix * c,
        }
    }

    pub fn quad_form(&self, d: &[f64]) -> f64 {
        let v = DVector::from_column_slice(d);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().cloned().collect())
            .collect()
    }
}

/// `J = (mu_R - mu_T)' W (mu_R - mu_T)`, nonnegative, zero iff the vectors
/// agree in the range space of W.
pub fn objective(mu_target: &MomentVector, mu_sim: &MomentVector, w: &WeightMatrix) -> Result<f64> {
    if mu_target.spec != mu_sim.spec {
        return Err(Error::shape(
            format!("{:?}", mu_target.spec),
            format!("{:?}", mu_sim.spec),
        ));
    }
    let a = mu_target.stacked();
    let b = mu_sim.stacked();
    if w.dim() != a.len() {
        return Err(Error::shape(
            format!("weight matrix of dimension {}", a.len()),
            format!("{}", w.dim()),
        ));
    }
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(w.quad_form(&d))
}

/// One swept dimension: `count` equally spaced breakpoints on [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridDim {
    pub fn breakpoints(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.lo + i as f64 * step).collect()
    }
}

/// Rectangular lattice over a subset of the parameter dimensions.
///
/// Flat node indices are row-major with the last dimension fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<GridDim>,
}

impl GridSpec {
    pub fn new(dims: Vec<GridDim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("grid needs at least one dimension"));
        }
        for d in &dims {
            if d.count < 1 {
                return Err(Error::config(format!(
                    "grid dim `{}` needs count >= 1",
                    d.name
                )));
            }
            if d.lo.is_nan() || d.hi.is_nan() || d.lo > d.hi {
                return Err(Error::config(format!("grid dim `{}` has lo > hi", d.name)));
            }
        }
        Ok(GridSpec { dims })
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().map(|d| d.count).product()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        let mut rem = flat;
        for (k, d) in self.dims.iter().enumerate().rev() {
            idx[k] = rem % d.count;
            rem /= d.count;
        }
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        for (k, d) in self.dims.iter().enumerate() {
            flat = flat * d.count + multi[k];
        }
        flat
    }

    /// Parameter values at a node, in dim order.
    pub fn node_values(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.dims)
            .map(|(&i, d)| d.breakpoints()[i])
            .collect()
    }

    pub fn params_at(&self, base: &ParamVector, flat: usize) -> Result<ParamVector> {
        let mut p = base.clone();
        for (d, v) in self.dims.iter().zip(self.node_values(flat)) {
            p.set(&d.name, v)?;
        }
        Ok(p)
    }

    /// Axis neighbors (one step along one dimension).
    pub fn neighbors(&self, flat: usize) -> Vec<usize> {
        let multi = self.multi_index(flat);
        let mut out = Vec::with_capacity(2 * self.dims.len());
        for (k, d) in self.dims.iter().enumerate() {
            if multi[k] > 0 {
                let mut m = multi.clone();
                m[k] -= 1;
                out.push(self.flat_index(&m));
            }
            if multi[k] + 1 < d.count {
                let mut m = multi.clone();
                m[k] += 1;
                out.push(self.flat_index(&m));
            }
        }
        out
    }

    /// All nodes within one step in every dimension (diagonals included).
    pub fn chebyshev_neighbors(&self, flat: usize) -> Vec<usize> {
        let multi = self.multi_index(flat);
        let mut out = Vec::new();
        let mut offsets = vec![-1i64; self.dims.len()];
        loop {
            if offsets.iter().any(|&o| o != 0) {
                let mut m = Vec::with_capacity(multi.len());
                let mut ok = true;
                for ((&i, &o), d) in multi.iter().zip(&offsets).zip(&self.dims) {
                    let j = i as i64 + o;
                    if j < 0 || j >= d.count as i64 {
                        ok = false;
                        break;
                    }
                    m.push(j as usize);
                }
                if ok {
                    out.push(self.flat_index(&m));
                }
            }
            // odometer over {-1, 0, 1}^D
            let mut k = 0;
            loop {
                if k == offsets.len() {
                    return out;
                }
                offsets[k] += 1;
                if offsets[k] <= 1 {
                    break;
                }
                offsets[k] = -1;
                k += 1;
            }
        }
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.dims)
            .any(|(&i, d)| d.count > 1 && (i == 0 || i + 1 == d.count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSource {
    Simulated,
    Analytic,
}

/// Objective values on a grid, with full provenance.
#[derive(Debug, Clone)]
pub struct ObjectiveSurface {
    pub grid: GridSpec,
    pub base_params: ParamVector,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub node_errors: Vec<Option<String>>,
    pub moment_spec: MomentSpec,
    pub weight: WeightMatrix,
    pub master_seed: u64,
    pub crn: bool,
    pub config: SimConfig,
    pub source: SurfaceSource,
    /// Set when a refinement found its incumbent on the previous grid's
    /// boundary: the minimum may lie outside the swept box.
    pub boundary_warning: bool,
}

impl ObjectiveSurface {
    pub fn min_node(&self) -> Option<usize> {
        (0..self.values.len())
            .filter(|&i| self.valid[i])
            .min_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
    }

    /// (min, max) over valid nodes.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let mut it = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(x, _)| *x);
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for v in it {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Evaluate `J` on every grid node by simulation.
///
/// With `crn = true` (the default protocol) every node reuses the exact same
/// child-seed set derived from `config.master_seed`, so the surface is a
/// deterministic, near-smooth function on the grid. With `crn = false` each
/// node gets its own seed family `derive(master_seed, node_index)`.
///
/// Per-node failures mark the node invalid and record the message; the
/// surface is still returned.
pub fn sweep(
    model: &dyn Model,
    base: &ParamVector,
    grid: &GridSpec,
    config: &SimConfig,
    target: &MomentVector,
    w: &WeightMatrix,
    crn: bool,
) -> Result<ObjectiveSurface> {
    for d in &grid.dims {
        if base.index_of(&d.name).is_none() {
            return Err(Error::config(format!(
                "grid dimension `{}` is not a parameter of the model",
                d.name
            )));
        }
    }
    if w.dim() != target.len() {
        return Err(Error::shape(
            format!("weight matrix of dimension {}", target.len()),
            format!("{}", w.dim()),
        ));
    }

    let n = grid.node_count();
    let results: Vec<(f64, bool, Option<String>)> = (0..n)
        .into_par_iter()
        .map(|node| {
            let eval = || -> Result<f64> {
                let params = grid.params_at(base, node)?;
                let mut node_config = config.clone();
                if !crn {
                    node_config.master_seed = derive(config.master_seed, node as u64);
                }
                let trajs = replicate(model, &params, &node_config)?;
                let sim = pooled(&trajs, &target.spec)?;
                let j = objective(target, &sim, w)?;
                if !j.is_finite() {
                    return Err(Error::numerical(format!("objective value {j}"), None));
                }
                Ok(j)
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
        crn,
        config: config.clone(),
        source: SurfaceSource::Simulated,
        boundary_warning: false,
    })
}

/// Re-sweep on a box shrunk around the incumbent minimum.
///
/// The new grid keeps the breakpoint counts, centers each dimension on the
/// incumbent, scales the width by `shrink` and clips to the parameter
/// bounds. If the incumbent sat on the old grid's boundary the returned
/// surface carries `boundary_warning`.
pub fn refine(
    surface: &ObjectiveSurface,
    shrink: f64,
    model: &dyn Model,
    config: &SimConfig,
    target: &MomentVector,
    w: &WeightMatrix,
) -> Result<ObjectiveSurface> {
    if !(0.0 < shrink && shrink < 1.0) {
        return Err(Error::config("shrink must lie in (0, 1)"));
    }
    let incumbent = surface
        .min_node()
        .ok_or_else(|| Error::config("refine requires at least one valid node"))?;
    let on_boundary = surface.grid.is_boundary(incumbent);
    let center = surface.grid.node_values(incumbent);

    let mut dims = Vec::with_capacity(surface.grid.dims.len());
    for (d, &c) in surface.grid.dims.iter().zip(&center) {
        let half = (d.hi - d.lo) * shrink / 2.0;
        let param = surface
            .base_params
            .entries()
            .iter()
            .find(|p| p.name == d.name)
            .ok_or_else(|| Error::config(format!("grid dim `{}` missing from params", d.name)))?;
        let lo = (c - half).max(param.lo);
        let hi = (c + half).min(param.hi);
        dims.push(GridDim {
            name: d.name.clone(),
            lo,
            hi,
            count: d.count,
        });
    }
    let grid = GridSpec::new(dims)?;
    let mut refined = sweep(
        model,
        &surface.base_params,
        &grid,
        config,
        target,
        w,
        surface.crn,
    )?;
    refined.boundary_warning = on_boundary;
    Ok(refined)
}

/// A grid node in the global-minimum set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinNode {
    pub index: usize,
    pub multi: Vec<usize>,
    /// Parameter values in grid-dim order.
    pub values: Vec<f64>,
    pub objective: f64,
    pub on_boundary: bool,
}

/// Local minima (nodes no worse than every axis neighbor) whose value lies
/// within `tol_equiv` of the global minimum, sorted by value then index.
pub fn find_minima(surface: &ObjectiveSurface, tol_equiv: f64) -> Result<Vec<MinNode>> {
    if surface.valid_count() == 0 {
        return Err(Error::config("surface has no valid nodes"));
    }
    let vmin = surface.values[surface.min_node().expect("valid node exists")];
    let mut out = Vec::new();
    for i in 0..surface.values.len() {
        if !surface.valid[i] {
            continue;
        }
        let v = surface.values[i];
        if v > vmin + tol_equiv {
            continue;
        }
        let is_local_min = surface
            .grid
            .neighbors(i)
            .into_iter()
            .filter(|&j| surface.valid[j])
            .all(|j| v <= surface.values[j]);
        if is_local_min {
            out.push(MinNode {
                index: i,
                multi: surface.grid.multi_index(i),
                values: surface.grid.node_values(i),
                objective: v,
                on_boundary: surface.grid.is_boundary(i),
            });
        }
    }
    out.sort_by(|a, b| {
        a.objective
            .total_cmp(&b.objective)
            .then(a.index.cmp(&b.index))
    });
    Ok(out)
}

/// Central-difference Hessian of an arbitrary objective over the named
/// parameter dimensions. `theta` must be interior to its bounds by at least
/// one step in every probed dimension.
pub fn hessian_fn(
    f: &mut dyn FnMut(&ParamVector) -> Result<f64>,
    theta: &ParamVector,
    dims: &[&str],
    steps: &[f64],
) -> Result<DMatrix<f64>> {
    if dims.len() != steps.len() {
        return Err(Error::shape(
            format!("{} steps", dims.len()),
            format!("{}", steps.len()),
        ));
    }
    for (name, &h) in dims.iter().zip(steps) {
        if h <= 0.0 {
            return Err(Error::config(format!("step for `{name}` must be positive")));
        }
        let p = theta
            .entries()
            .iter()
            .find(|p| p.name == *name)
            .ok_or_else(|| Error::config(format!("unknown hessian dimension `{name}`")))?;
        if p.value - h < p.lo || p.value + h > p.hi {
            return Err(Error::config(format!(
                "hessian step {h} for `{name}` crosses the bounds [{}, {}] from {}",
                p.lo, p.hi, p.value
            )));
        }
    }

    let d = dims.len();
    let shift = |offsets: &[(usize, f64)]| -> Result<ParamVector> {
        let mut p = theta.clone();
        for &(k, dv) in offsets {
            let name = dims[k];
            let v = p.require(name)? + dv;
            p.set(name, v)?;
        }
        Ok(p)
    };

    let j0 = f(theta)?;
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let hi = steps[i];
        let jp = f(&shift(&[(i, hi)])?)?;
        let jm = f(&shift(&[(i, -hi)])?)?;
        h[(i, i)] = (jp - 2.0 * j0 + jm) / (hi * hi);
        for j in (i + 1)..d {
            let hj = steps[j];
            let jpp = f(&shift(&[(i, hi), (j, hj)])?)?;
            let jpm = f(&shift(&[(i, hi), (j, -hj)])?)?;
            let jmp = f(&shift(&[(i, -hi), (j, hj)])?)?;
            let jmm = f(&shift(&[(i, -hi), (j, -hj)])?)?;
            h[(i, j)] = (jpp - jpm - jmp + jmm) / (4.0 * hi * hj);
            h[(j, i)] = h[(i, j)];
        }
    }
    Ok((&h + h.transpose()) / 2.0)
}

/// Hessian of the simulated objective at `theta_star`. Common random
/// numbers are not optional here: every evaluation reuses the seed set of
/// `config.master_seed`.
pub fn hessian(
    model: &dyn Model,
    theta_star: &ParamVector,
    config: &SimConfig,
    target: &MomentVector,
    w: &WeightMatrix,
    dims: &[&str],
    steps: &[f64],
) -> Result<DMatrix<f64>> {
    let mut f = |p: &ParamVector| -> Result<f64> {
        let trajs = replicate(model, p, config)?;
        let sim = pooled(&trajs, &target.spec)?;
        objective(target, &sim, w)
    };
    hessian_fn(&mut f, theta_star, dims, steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdentClass {
    Identified,
    ObservationalEquivalence,
    UnderIdentified,
    PartiallyIdentified,
    WeaklyIdentified,
}

impl std::fmt::Display for IdentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            IdentClass::Identified => "Identified",
            IdentClass::ObservationalEquivalence => "ObservationalEquivalence",
            IdentClass::UnderIdentified => "UnderIdentified",
            IdentClass::PartiallyIdentified => "PartiallyIdentified",
            IdentClass::WeaklyIdentified => "WeaklyIdentified",
        };
        f.write_str(s)
    }
}

/// Classification thresholds, all relative to the surface scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Equivalence band around the global minimum, x surface range.
    pub tol_equiv_frac: f64,
    /// Flat-dimension band, x surface range.
    pub flat_tol_frac: f64,
    /// Ridge eigenvalue band, x largest |eigenvalue|.
    pub ridge_tol_frac: f64,
    /// Weak-identification bound on min/max eigenvalue.
    pub weak_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tol_equiv_frac: 1e-2,
            flat_tol_frac: 1e-8,
            ridge_tol_frac: 1e-6,
            weak_ratio: 1e-3,
        }
    }
}

impl Thresholds {
    pub fn tol_equiv(&self, surface: &ObjectiveSurface) -> f64 {
        let (lo, hi) = surface.value_range().unwrap_or((0.0, 0.0));
        self.tol_equiv_frac * (hi - lo)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolvedThresholds {
    pub tol_equiv: f64,
    pub flat_tol: f64,
    pub ridge_tol: f64,
    pub weak_ratio: f64,
}

/// Outcome of the identifiability classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentReport {
    pub classification: Vec<IdentClass>,
    pub global_minima: Vec<MinNode>,
    pub flat_dimensions: Vec<String>,
    pub hessian: Option<Vec<Vec<f64>>>,
    /// Eigen decomposition of the Hessian, ascending by eigenvalue.
    pub eigen: Vec<EigenPair>,
    pub evidence: BTreeMap<String, String>,
    pub thresholds_used: ResolvedThresholds,
    /// A reported minimum sits on the grid boundary.
    pub boundary_minimum: bool,
    /// Set by the posterior check when the chain is too short to judge.
    pub inconclusive: bool,
}

/// Classify a surface into the identification failure modes.
///
/// * Observational equivalence: the sublevel set within `tol_equiv` of the
///   global minimum splits into more than one connected component under
///   axis adjacency. Connectedness is what separates genuinely distinct
///   minima from the contiguous trough of a ridge, which shows up through
///   the Hessian as partial identification instead.
/// * Under-identification: along some dimension (others held at the
///   incumbent) the objective moves by at most `flat_tol`.
/// * Partial identification: a Hessian eigenvalue at most `ridge_tol` whose
///   eigenvector spreads over at least two parameters.
/// * Weak identification: smallest/largest eigenvalue below `weak_ratio`
///   while the smallest is still above the ridge band.
pub fn classify(
    surface: &ObjectiveSurface,
    minima: &[MinNode],
    hessian: Option<&DMatrix<f64>>,
    thresholds: &Thresholds,
) -> Result<IdentReport> {
    let (vmin, vmax) = surface
        .value_range()
        .ok_or_else(|| Error::config("surface has no valid nodes"))?;
    let range = vmax - vmin;
    let tol_equiv = thresholds.tol_equiv_frac * range;
    let flat_tol = thresholds.flat_tol_frac * range;

    let mut evidence = BTreeMap::new();
    let mut classes = Vec::new();

    // observational equivalence via sublevel-set components
    let in_set: Vec<bool> = surface
        .values
        .iter()
        .zip(&surface.valid)
        .map(|(&v, &ok)| ok && v <= vmin + tol_equiv)
        .collect();
    let components = count_components(&surface.grid, &in_set);
    if components > 1 {
        classes.push(IdentClass::ObservationalEquivalence);
    }
    evidence.insert(
        "minima".to_string(),
        format!(
            "{} equivalent minima in {} connected component(s) of the tol_equiv sublevel set",
            minima.len(),
            components
        ),
    );

    // under-identification: flat lines through the incumbent
    let incumbent = minima
        .first()
        .map(|m| m.index)
        .or_else(|| surface.min_node())
        .ok_or_else(|| Error::config("no minima supplied"))?;
    let inc_multi = surface.grid.multi_index(incumbent);
    let mut flat_dimensions = Vec::new();
    for (k, d) in surface.grid.dims.iter().enumerate() {
        if d.count < 2 {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = false;
        for i in 0..d.count {
            let mut m = inc_multi.clone();
            m[k] = i;
            let flat = surface.grid.flat_index(&m);
            if surface.valid[flat] {
                lo = lo.min(surface.values[flat]);
                hi = hi.max(surface.values[flat]);
                seen = true;
            }
        }
        if seen && hi - lo <= flat_tol {
            flat_dimensions.push(d.name.clone());
        }
    }
    if !flat_dimensions.is_empty() {
        classes.push(IdentClass::UnderIdentified);
        evidence.insert(
            "flat_dimensions".to_string(),
            format!(
                "objective range <= {flat_tol:.3e} along: {}",
                flat_dimensions.join(", ")
            ),
        );
    }

    // hessian spectrum: ridges and weak curvature
    let mut eigen_pairs = Vec::new();
    let mut ridge_tol = 0.0;
    if let Some(h) = hessian {
        let eig = h.clone().symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for &i in &order {
            eigen_pairs.push(EigenPair {
                value: eig.eigenvalues[i],
                vector: eig.eigenvectors.column(i).iter().cloned().collect(),
            });
        }
        let max_abs = eigen_pairs.iter().fold(0.0f64, |a, p| a.max(p.value.abs()));
        ridge_tol = thresholds.ridge_tol_frac * max_abs;

        let mut ridge_found = false;
        for p in &eigen_pairs {
            if p.value <= ridge_tol {
                let shares: Vec<f64> = p.vector.iter().map(|v| v * v).collect();
                let significant: Vec<usize> =
                    (0..shares.len()).filter(|&i| shares[i] >= 0.1).collect();
                let spread_mass: f64 = significant.iter().map(|&i| shares[i]).sum();
                if significant.len() >= 2 && spread_mass > 0.5 {
                    ridge_found = true;
                    evidence.insert(
                        "ridge".to_string(),
                        format!(
                            "eigenvalue {:.3e} <= ridge_tol {:.3e}, eigenvector {:?}",
                            p.value, ridge_tol, p.vector
                        ),
                    );
                }
            }
        }
        if ridge_found {
            classes.push(IdentClass::PartiallyIdentified);
        }

        if !eigen_pairs.is_empty() {
            let min_eig = eigen_pairs[0].value;
            let max_eig = eigen_pairs[eigen_pairs.len() - 1].value;
            if max_eig > 0.0 && min_eig > ridge_tol && min_eig / max_eig < thresholds.weak_ratio {
                classes.push(IdentClass::WeaklyIdentified);
                evidence.insert(
                    "weak".to_string(),
                    format!(
                        "eigenvalue ratio {:.3e} below {:.3e}",
                        min_eig / max_eig,
                        thresholds.weak_ratio
                    ),
                );
            }
        }
        evidence.insert(
            "hessian_spectrum".to_string(),
            format!(
                "{:?}",
                eigen_pairs.iter().map(|p| p.value).collect::<Vec<_>>()
            ),
        );
    }

    if classes.is_empty() {
        classes.push(IdentClass::Identified);
    }
    classes.sort();
    classes.dedup();

    let boundary_minimum = minima.iter().any(|m| m.on_boundary);
    if boundary_minimum {
        evidence.insert(
            "boundary".to_string(),
            "a global minimum lies on the grid boundary; the true minimum may be outside the box"
                .to_string(),
        );
    }

    Ok(IdentReport {
        classification: classes,
        global_minima: minima.to_vec(),
        flat_dimensions,
        hessian: hessian.map(|h| {
            (0..h.nrows())
                .map(|i| h.row(i).iter().cloned().collect())
                .collect()
        }),
        eigen: eigen_pairs,
        evidence,
        thresholds_used: ResolvedThresholds {
            tol_equiv,
            flat_tol,
            ridge_tol,
            weak_ratio: thresholds.weak_ratio,
        },
        boundary_minimum,
        inconclusive: false,
    })
}

/// Connected components of `mask` on the grid.
///
/// Adjacency includes diagonals: a thin valley crossing the lattice at an
/// angle discretizes to a diagonal staircase, which must still count as one
/// feature, while genuinely separated basins sit many cells apart either
/// way.
fn count_components(grid: &GridSpec, mask: &[bool]) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut components = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in grid.chebyshev_neighbors(i) {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Ar1, ProductOnly, UnusedParam};
    use crate::moments::MomentSpec;
    use crate::rng::StreamRng;

    fn vector(spec: &MomentSpec, raw: Vec<f64>, autocov: Vec<f64>) -> MomentVector {
        MomentVector {
            raw,
            autocov,
            spec: spec.clone(),
            sample_size: 1,
        }
    }

    #[test]
    fn zero_distance_gives_zero_objective() {
        let spec = MomentSpec::raw(2);
        let mu = vector(&spec, vec![0.3, 1.7], vec![]);
        let w = WeightMatrix::identity(2);
        assert_eq!(objective(&mu, &mu.clone(), &w).unwrap(), 0.0);
    }

    #[test]
    fn identity_weight_gives_squared_norm() {
        let spec = MomentSpec::raw(2);
        let a = vector(&spec, vec![1.0, 2.0], vec![]);
        let b = vector(&spec, vec![0.0, 0.0], vec![]);
        let w = WeightMatrix::identity(2);
        assert_eq!(objective(&a, &b, &w).unwrap(), 5.0);
    }

    #[test]
    fn quadratic_form_matches_explicit_triple_product() {
        let mut rng = StreamRng::from_seed(44);
        for _ in 0..20 {
            // random PSD W = A' A
            let a = DMatrix::from_fn(3, 3, |_, _| rng.normal());
            let w_raw = a.transpose() * &a;
            let w = WeightMatrix::from_matrix(WeightKind::FullInverseCovariance, w_raw.clone())
                .unwrap();
            let spec = MomentSpec::raw(3);
            let x = vector(&spec, (0..3).map(|_| rng.normal()).collect(), vec![]);
            let y = vector(&spec, (0..3).map(|_| rng.normal()).collect(), vec![]);
            let j = objective(&x, &y, &w).unwrap();
            // independent brute-force triple product
            let d: Vec<f64> = x.raw.iter().zip(&y.raw).map(|(p, q)| p - q).collect();
            let mut expected = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    expected += d[i] * w_raw[(i, k)] * d[k];
                }
            }
            assert!((j - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let a = vector(&MomentSpec::raw(2), vec![1.0, 2.0], vec![]);
        let b = vector(&MomentSpec::raw(3), vec![1.0, 2.0, 3.0], vec![]);
        let w = WeightMatrix::identity(2);
        assert!(matches!(objective(&a, &b, &w), Err(Error::Shape { .. })));
    }

    #[test]
    fn asymmetric_weight_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(WeightMatrix::from_matrix(WeightKind::Identity, m).is_err());
    }

    #[test]
    fn grid_indexing_round_trips() {
        let grid = GridSpec::new(vec![
            GridDim {
                name: "a".into(),
                lo: 0.0,
                hi: 1.0,
                count: 3,
            },
            GridDim {
                name: "b".into(),
                lo: -1.0,
                hi: 1.0,
                count: 5,
            },
        ])
        .unwrap();
        assert_eq!(grid.node_count(), 15);
        for flat in 0..15 {
            assert_eq!(grid.flat_index(&grid.multi_index(flat)), flat);
        }
        assert_eq!(grid.node_values(0), vec![0.0, -1.0]);
        assert_eq!(grid.node_values(14), vec![1.0, 1.0]);
    }

    fn synthetic_surface(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> ObjectiveSurface {
        let values: Vec<f64> = (0..grid.node_count())
            .map(|i| f(&grid.node_values(i)))
            .collect();
        let n = values.len();
        ObjectiveSurface {
            base_params: ParamVector::from_entries(&[
                ("a", 0.0, -10.0, 10.0),
                ("b", 0.0, -10.0, 10.0),
            ])
            .unwrap(),
            values,
            valid: vec![true; n],
            node_errors: vec![None; n],
            moment_spec: MomentSpec::raw(1),
            weight: WeightMatrix::identity(1),
            master_seed: 0,
            crn: true,
            config: SimConfig::new(1, 2, 1, 0),
            source: SurfaceSource::Analytic,
            boundary_warning: false,
            grid,
        }
    }

    #[test]
    fn convex_quadratic_has_exactly_one_minimum() {
        let grid = GridSpec::new(vec![
            GridDim {
                name: "a".into(),
                lo: -2.0,
                hi: 2.0,
                count: 9,
            },
            GridDim {
                name: "b".into(),
                lo: -2.0,
                hi: 2.0,
                count: 9,
            },
        ])
        .unwrap();
        let s = synthetic_surface(grid, |v| v[0] * v[0] + 2.0 * v[1] * v[1]);
        let minima = find_minima(&s, 1e-9).unwrap();
        assert_eq!(minima.len(), 1);
        assert_eq!(minima[0].values, vec![0.0, 0.0]);
    }

    #[test]
    fn sign_symmetric_values_yield_two_minima() {
        let grid = GridSpec::new(vec![GridDim {
            name: "a".into(),
            lo: -2.0,
            hi: 2.0,
            count: 21,
        }])
        .unwrap();
        let s = synthetic_surface(grid, |v| (v[0] * v[0] - 1.0).powi(2));
        let minima = find_minima(&s, 1e-9).unwrap();
        assert_eq!(minima.len(), 2);
        let mut locs: Vec<f64> = minima.iter().map(|m| m.values[0]).collect();
        locs.sort_by(f64::total_cmp);
        assert_eq!(locs, vec![-1.0, 1.0]);
    }

    // Independent oracle: exhaustive neighbor scan with its own adjacency
    // arithmetic, no use of GridSpec::neighbors.
    #[test]
    fn find_minima_matches_brute_force_neighbor_scan() {
        let (ca, cb) = (11usize, 13usize);
        let grid = GridSpec::new(vec![
            GridDim {
                name: "a".into(),
                lo: 1.0,
                hi: 4.0,
                count: ca,
            },
            GridDim {
                name: "b".into(),
                lo: 1.0,
                hi: 4.0,
                count: cb,
            },
        ])
        .unwrap();
        let f = |v: &[f64]| (v[0] * v[1] - 6.0).powi(2);
        let s = synthetic_surface(grid, f);
        let tol = 0.05;
        let got: Vec<usize> = find_minima(&s, tol)
            .unwrap()
            .iter()
            .map(|m| m.index)
            .collect();

        let value = |ia: usize, ib: usize| {
            let a = 1.0 + ia as f64 * 3.0 / (ca - 1) as f64;
            let b = 1.0 + ib as f64 * 3.0 / (cb - 1) as f64;
            f(&[a, b])
        };
        let vmin = (0..ca)
            .flat_map(|ia| (0..cb).map(move |ib| value(ia, ib)))
            .fold(f64::INFINITY, f64::min);
        let mut expected = Vec::new();
        for ia in 0..ca {
            for ib in 0..cb {
                let v = value(ia, ib);
                if v > vmin + tol {
                    continue;
                }
                let mut ok = true;
                if ia > 0 && value(ia - 1, ib) < v {
                    ok = false;
                }
                if ia + 1 < ca && value(ia + 1, ib) < v {
                    ok = false;
                }
                if ib > 0 && value(ia, ib - 1) < v {
                    ok = false;
                }
                if ib + 1 < cb && value(ia, ib + 1) < v {
                    ok = false;
                }
                if ok {
                    expected.push(ia * cb + ib);
                }
            }
        }
        let mut got_sorted = got.clone();
        got_sorted.sort_unstable();
        expected.sort_unstable();
        assert_eq!(got_sorted, expected);
    }

    #[test]
    fn one_point_self_target_sweep_is_exactly_zero() {
        let config = SimConfig::new(1, 400, 10, 99);
        let base = Ar1.default_params();
        let trajs = crate::dgp::replicate(&Ar1, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::raw(2)).unwrap();
        let grid = GridSpec::new(vec![GridDim {
            name: "rho".into(),
            lo: 0.5,
            hi: 0.5,
            count: 1,
        }])
        .unwrap();
        let w = WeightMatrix::identity(2);
        let s = sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap();
        assert_eq!(s.values, vec![0.0]);
    }

    #[test]
    fn unused_dimension_sweep_is_flat_to_the_bit() {
        let config = SimConfig::new(1, 300, 5, 7);
        let base = UnusedParam.default_params();
        let trajs = crate::dgp::replicate(&UnusedParam, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::raw(2)).unwrap();
        let grid = GridSpec::new(vec![GridDim {
            name: "theta3".into(),
            lo: -2.0,
            hi: 2.0,
            count: 9,
        }])
        .unwrap();
        let w = WeightMatrix::identity(2);
        let s = sweep(&UnusedParam, &base, &grid, &config, &target, &w, true).unwrap();
        let first = s.values[0];
        assert!(s.values.iter().all(|&v| (v - first).abs() <= 1e-10));
    }

    #[test]
    fn sweep_under_crn_is_bit_reproducible_across_pool_sizes() {
        let config = SimConfig::new(1, 200, 4, 13);
        let base = Ar1.default_params();
        let trajs = crate::dgp::replicate(&Ar1, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::raw(2)).unwrap();
        let grid = GridSpec::new(vec![GridDim {
            name: "rho".into(),
            lo: 0.1,
            hi: 0.9,
            count: 9,
        }])
        .unwrap();
        let w = WeightMatrix::identity(2);
        let a = sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap();
        let b = sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap();
        assert_eq!(a.values, b.values);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap());
        assert_eq!(a.values, c.values);
    }

    #[test]
    fn scaling_w_scales_values_but_not_minima_or_classes() {
        let grid = GridSpec::new(vec![GridDim {
            name: "a".into(),
            lo: -2.0,
            hi: 2.0,
            count: 11,
        }])
        .unwrap();
        let mut s = synthetic_surface(grid, |v| (v[0] - 0.4).powi(2));
        let minima1 = find_minima(&s, Thresholds::default().tol_equiv(&s)).unwrap();
        let report1 = classify(&s, &minima1, None, &Thresholds::default()).unwrap();
        let c = 7.5;
        s.values.iter_mut().for_each(|v| *v *= c);
        s.weight = s.weight.scaled(c);
        let minima2 = find_minima(&s, Thresholds::default().tol_equiv(&s)).unwrap();
        let report2 = classify(&s, &minima2, None, &Thresholds::default()).unwrap();
        assert_eq!(
            minima1.iter().map(|m| m.index).collect::<Vec<_>>(),
            minima2.iter().map(|m| m.index).collect::<Vec<_>>()
        );
        assert_eq!(report1.classification, report2.classification);
    }

    #[test]
    fn refine_halves_the_box_around_an_interior_minimum() {
        let grid = GridSpec::new(vec![GridDim {
            name: "rho".into(),
            lo: 0.1,
            hi: 0.9,
            count: 9,
        }])
        .unwrap();
        let config = SimConfig::new(1, 200, 4, 3);
        let base = Ar1.default_params();
        let trajs = crate::dgp::replicate(&Ar1, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::with_lags(2, &[1])).unwrap();
        let w = WeightMatrix::identity(3);
        let s = sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap();
        let r = refine(&s, 0.5, &Ar1, &config, &target, &w).unwrap();
        let d = &r.grid.dims[0];
        assert!((d.hi - d.lo - 0.4).abs() < 1e-12, "width {}", d.hi - d.lo);
        assert_eq!(d.count, 9);
    }

    #[test]
    fn refine_flags_a_boundary_incumbent() {
        // target built at rho = 0.9 while the grid stops at 0.6: the
        // incumbent is the right edge
        let config = SimConfig::new(1, 400, 6, 17);
        let base = Ar1.default_params().with("rho", 0.9).unwrap();
        let trajs = crate::dgp::replicate(&Ar1, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::with_lags(2, &[1])).unwrap();
        let grid = GridSpec::new(vec![GridDim {
            name: "rho".into(),
            lo: 0.0,
            hi: 0.6,
            count: 7,
        }])
        .unwrap();
        let w = WeightMatrix::identity(3);
        let s = sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap();
        assert_eq!(s.min_node(), Some(6));
        let r = refine(&s, 0.5, &Ar1, &config, &target, &w).unwrap();
        assert!(r.boundary_warning);
    }

    #[test]
    fn successive_refines_tighten_the_bracket_monotonically() {
        let config = SimConfig::new(1, 500, 8, 23);
        let base = Ar1.default_params();
        let trajs = crate::dgp::replicate(&Ar1, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::with_lags(2, &[1])).unwrap();
        let grid = GridSpec::new(vec![GridDim {
            name: "rho".into(),
            lo: 0.05,
            hi: 0.95,
            count: 11,
        }])
        .unwrap();
        let w = WeightMatrix::identity(3);
        let s0 = sweep(&Ar1, &base, &grid, &config, &target, &w, true).unwrap();
        let s1 = refine(&s0, 0.5, &Ar1, &config, &target, &w).unwrap();
        let s2 = refine(&s1, 0.5, &Ar1, &config, &target, &w).unwrap();
        let width = |s: &ObjectiveSurface| s.grid.dims[0].hi - s.grid.dims[0].lo;
        assert!(width(&s1) < width(&s0));
        assert!(width(&s2) < width(&s1));
        // the true rho stays inside every bracket
        for s in [&s1, &s2] {
            assert!(s.grid.dims[0].lo <= 0.5 && 0.5 <= s.grid.dims[0].hi);
        }
    }

    #[test]
    fn hessian_of_injected_quadratic_recovers_curvature() {
        // J = theta' A theta with A = [[2, 0.5], [0.5, 1]]; Hessian = 2A
        let a = [[2.0, 0.5], [0.5, 1.0]];
        let theta = ParamVector::from_entries(&[("x", 0.3, -10.0, 10.0), ("y", -0.2, -10.0, 10.0)])
            .unwrap();
        let mut f = |p: &ParamVector| -> Result<f64> {
            let v = [p.require("x")?, p.require("y")?];
            let mut j = 0.0;
            for i in 0..2 {
                for k in 0..2 {
                    j += v[i] * a[i][k] * v[k];
                }
            }
            Ok(j)
        };
        let h = hessian_fn(&mut f, &theta, &["x", "y"], &[1e-3, 1e-3]).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let expected = 2.0 * a[i][k];
                assert!(
                    (h[(i, k)] - expected).abs() <= 1e-4 * expected.abs().max(1.0),
                    "H[{i}][{k}] = {} vs {expected}",
                    h[(i, k)]
                );
            }
        }
    }

    #[test]
    fn hessian_step_crossing_bounds_is_a_configuration_error() {
        let theta = ParamVector::from_entries(&[("x", 0.95, 0.0, 1.0)]).unwrap();
        let mut f = |_: &ParamVector| Ok(0.0);
        assert!(matches!(
            hessian_fn(&mut f, &theta, &["x"], &[0.1]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn product_ridge_hessian_has_null_direction_along_the_ridge() {
        let config = SimConfig::new(1, 500, 20, 5);
        let base = ProductOnly.default_params(); // (2, 3)
        let trajs = crate::dgp::replicate(&ProductOnly, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::raw(2)).unwrap();
        let w = WeightMatrix::identity(2);
        let h = hessian(
            &ProductOnly,
            &base,
            &config,
            &target,
            &w,
            &["theta1", "theta2"],
            &[0.05, 0.05],
        )
        .unwrap();
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = vec![0, 1];
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .abs()
                .total_cmp(&eig.eigenvalues[b].abs())
        });
        let small = order[0];
        let v: Vec<f64> = eig.eigenvectors.column(small).iter().cloned().collect();
        // analytic tangent of theta1*theta2 = 6 at (2,3) is (2,-3)/sqrt(13)
        let t = [2.0 / 13.0f64.sqrt(), -3.0 / 13.0f64.sqrt()];
        let cos = (v[0] * t[0] + v[1] * t[1]).abs();
        let angle = cos.min(1.0).acos().to_degrees();
        assert!(angle < 10.0, "ridge angle {angle} deg, eigvec {v:?}");
        assert!(
            eig.eigenvalues[small].abs() < 1e-2 * eig.eigenvalues[order[1]].abs(),
            "{:?}",
            eig.eigenvalues
        );
    }

    #[test]
    fn unused_dimension_has_a_zero_hessian_row() {
        let config = SimConfig::new(1, 300, 10, 5);
        let base = UnusedParam.default_params();
        let trajs = crate::dgp::replicate(&UnusedParam, &base, &config).unwrap();
        let target = crate::moments::pooled(&trajs, &MomentSpec::raw(2)).unwrap();
        let w = WeightMatrix::identity(2);
        let dims = ["theta1", "theta2", "theta3"];
        let h = hessian(
            &UnusedParam,
            &base,
            &config,
            &target,
            &w,
            &dims,
            &[0.05, 0.05, 0.05],
        )
        .unwrap();
        for k in 0..3 {
            assert!(h[(2, k)].abs() <= 1e-10, "row {:?}", h.row(2));
            assert!(h[(k, 2)].abs() <= 1e-10);
        }
    }

    #[test]
    fn classify_separated_minima_as_observational_equivalence() {
        let grid = GridSpec::new(vec![GridDim {
            name: "a".into(),
            lo: -2.0,
            hi: 2.0,
            count: 21,
        }])
        .unwrap();
        let s = synthetic_surface(grid, |v| (v[0] * v[0] - 1.0).powi(2));
        let thresholds = Thresholds::default();
        let minima = find_minima(&s, thresholds.tol_equiv(&s)).unwrap();
        let report = classify(&s, &minima, None, &thresholds).unwrap();
        assert_eq!(
            report.classification,
            vec![IdentClass::ObservationalEquivalence]
        );
    }

    #[test]
    fn classify_connected_ridge_trough_is_not_observational_equivalence() {
        let grid = GridSpec::new(vec![
            GridDim {
                name: "a".into(),
                lo: 1.0,
                hi: 4.0,
                count: 13,
            },
            GridDim {
                name: "b".into(),
                lo: 1.0,
                hi: 4.0,
                count: 13,
            },
        ])
        .unwrap();
        let s = synthetic_surface(grid, |v| (v[0] * v[1] - 6.0).powi(2));
        let thresholds = Thresholds::default();
        let minima = find_minima(&s, thresholds.tol_equiv(&s)).unwrap();
        assert!(minima.len() > 1, "ridge should produce several tied nodes");
        let report = classify(&s, &minima, None, &thresholds).unwrap();
        assert!(!report
            .classification
            .contains(&IdentClass::ObservationalEquivalence));
    }

    #[test]
    fn classify_flags_flat_dimension_and_names_it() {
        let grid = GridSpec::new(vec![
            GridDim {
                name: "a".into(),
                lo: -1.0,
                hi: 1.0,
                count: 9,
            },
            GridDim {
                name: "c".into(),
                lo: -1.0,
                hi: 1.0,
                count: 9,
            },
        ])
        .unwrap();
        let s = synthetic_surface(grid, |v| v[0] * v[0]);
        let thresholds = Thresholds::default();
        let minima = find_minima(&s, thresholds.tol_equiv(&s)).unwrap();
        let report = classify(&s, &minima, None, &thresholds).unwrap();
        assert!(report.classification.contains(&IdentClass::UnderIdentified));
        assert_eq!(report.flat_dimensions, vec!["c".to_string()]);
    }
}
