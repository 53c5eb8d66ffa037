//! Protocol execution and artifact writing.

use crate::config::{Protocol, RunConfig, WeightChoice};
use abmident_core::bayes::{posterior_ident_check, posterior_sample, McmcConfig};
use abmident_core::dgp::{replicate, replicate_dispersed, simulate, Model, ParamVector, SimConfig};
use abmident_core::error::{Error, Result};
use abmident_core::export;
use abmident_core::indirect::{ii_ident_test, IiOptions};
use abmident_core::moments::{ergodicity_test, moments as traj_moments, pooled, MomentVector};
use abmident_core::oracle::{
    analytic_moment_vector, analytic_objective, fp_stationary_density, kirman_fp_spec,
    stationary_distribution, transition_matrix,
};
use abmident_core::rng::derive;
use abmident_core::smd::{
    classify, find_minima, hessian_fn, objective, refine, sweep, GridSpec, IdentReport,
    ObjectiveSurface, Thresholds, WeightMatrix,
};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Parse(format!("{name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }
}

pub fn execute(
    config: &RunConfig,
    resolved: &Value,
    output_override: Option<PathBuf>,
) -> Result<RunOutcome> {
    let output_dir = output_override
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            Error::config("output_dir: no output directory given (config or --output)")
        })?;
    let (model, params) = config.resolve_model()?;
    let sim = config.sim.to_sim_config();
    sim.validate()?;
    let hash = crate::config::config_hash(resolved);

    let mut w = Writer::new(&output_dir)?;
    match config.protocol {
        Protocol::Simulate => run_simulate(config, model.as_ref(), &params, &sim, &mut w)?,
        Protocol::Ergodicity => {
            run_ergodicity(config, model.as_ref(), &params, &sim, &hash, &mut w)?
        }
        Protocol::Smd => run_smd(config, model.as_ref(), &params, &sim, &hash, &mut w)?,
        Protocol::Bayes => run_bayes(config, model.as_ref(), &params, &sim, &hash, &mut w)?,
        Protocol::Indirect => run_indirect(config, model.as_ref(), &params, &sim, &hash, &mut w)?,
        Protocol::Oracle => run_oracle(config, model.as_ref(), &params, &sim, &hash, &mut w)?,
    }

    let manifest = json!({
        "schema_version": export::SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "protocol": config.protocol.as_str(),
        "config_hash": hash,
        "config": resolved,
        "seeds": { "master_seed": config.sim.master_seed },
        "outputs": w.files,
    });
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    text.push('\n');
    std::fs::write(output_dir.join("manifest.json"), text)?;

    let mut files = manifest["outputs"]
        .as_array()
        .expect("array")
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect::<Vec<_>>();
    files.push("manifest.json".to_string());
    Ok(RunOutcome { output_dir, files })
}

fn run_simulate(
    config: &RunConfig,
    model: &dyn Model,
    params: &ParamVector,
    sim: &SimConfig,
    w: &mut Writer,
) -> Result<()> {
    let replicate_idx = config.simulate.as_ref().map(|s| s.replicate).unwrap_or(0);
    let seed = derive(sim.master_seed, replicate_idx as u64);
    let traj = simulate(model, params, sim, seed)?;
    w.write("trajectory.csv", &export::trajectory_csv(&traj.observables))?;
    w.write(
        "plot.gp",
        "set datafile separator ','\nset xlabel 't'\nset ylabel 'y'\nplot 'trajectory.csv' every ::1 using 1:2 with lines title 'trajectory'\n",
    )?;
    Ok(())
}

fn run_ergodicity(
    config: &RunConfig,
    model: &dyn Model,
    params: &ParamVector,
    sim: &SimConfig,
    hash: &str,
    w: &mut Writer,
) -> Result<()> {
    let section = config
        .ergodicity
        .as_ref()
        .ok_or_else(|| Error::config("ergodicity: section missing"))?;
    let trajs = replicate_dispersed(model, params, sim)?;
    let report = ergodicity_test(&trajs, section.m, section.threshold)?;
    w.write_json(
        "ergodicity.json",
        &export::ergodicity_json(&report, section.m, hash),
    )?;
    Ok(())
}

/// Pseudo-real target: pooled moments plus the per-replicate vectors the
/// weight estimators need.
fn build_target(
    model: &dyn Model,
    params: &ParamVector,
    real_config: &SimConfig,
    spec: &abmident_core::moments::MomentSpec,
) -> Result<(MomentVector, Vec<MomentVector>)> {
    let trajs = replicate(model, params, real_config)?;
    let per: Vec<MomentVector> = trajs
        .iter()
        .map(|t| traj_moments(t, spec))
        .collect::<Result<_>>()?;
    let target = pooled(&trajs, spec)?;
    Ok((target, per))
}

fn build_weight(
    choice: WeightChoice,
    per_replicate: &[MomentVector],
    dim: usize,
) -> Result<WeightMatrix> {
    match choice {
        WeightChoice::Identity => Ok(WeightMatrix::identity(dim)),
        WeightChoice::DiagonalInverseVariance => {
            WeightMatrix::diagonal_inverse_variance(per_replicate)
        }
        WeightChoice::FullInverseCovariance => WeightMatrix::full_inverse_covariance(per_replicate),
    }
}

/// Hessian dims and step sizes at the incumbent: a configured fraction of
/// one grid cell, clamped inside the parameter bounds. Dimensions with a
/// single breakpoint are not probed.
fn hessian_plan(
    grid: &GridSpec,
    best: &ParamVector,
    step_frac: f64,
) -> Option<(Vec<String>, Vec<f64>)> {
    let mut dims = Vec::new();
    let mut steps = Vec::new();
    for d in &grid.dims {
        if d.count < 2 {
            continue;
        }
        let cell = (d.hi - d.lo) / (d.count - 1) as f64;
        let p = best.entries().iter().find(|p| p.name == d.name)?;
        let room = (p.value - p.lo).min(p.hi - p.value);
        if room <= 0.0 {
            return None;
        }
        dims.push(d.name.clone());
        steps.push((step_frac * cell).min(0.9 * room));
    }
    if dims.is_empty() {
        None
    } else {
        Some((dims, steps))
    }
}

fn classify_surface(
    surface: &ObjectiveSurface,
    thresholds: &Thresholds,
    hessian: Option<&abmident_core::nalgebra::DMatrix<f64>>,
    hessian_note: Option<String>,
) -> Result<IdentReport> {
    let minima = find_minima(surface, thresholds.tol_equiv(surface))?;
    let mut report = classify(surface, &minima, hessian, thresholds)?;
    if let Some(note) = hessian_note {
        report.evidence.insert("hessian_skipped".to_string(), note);
    }
    Ok(report)
}

fn run_smd(
    config: &RunConfig,
    model: &dyn Model,
    params: &ParamVector,
    sim: &SimConfig,
    hash: &str,
    w: &mut Writer,
) -> Result<()> {
    let section = config
        .smd
        .as_ref()
        .ok_or_else(|| Error::config("smd: section missing"))?;
    let grid = GridSpec::new(section.grid.clone())?;
    let real_config = section
        .target
        .to_sim_config(config.sim.n_agents, config.sim.noise_scale);
    let (target, per_rep) = build_target(model, params, &real_config, &section.moments)?;
    let weight = build_weight(section.weight, &per_rep, target.len())?;

    let mut surface = sweep(model, params, &grid, sim, &target, &weight, section.crn)?;
    for round in 0..section.refine_rounds {
        w.write(
            &format!("surface_round{round}.csv"),
            &export::surface_csv(&surface),
        )?;
        surface = refine(
            &surface,
            section.refine_shrink,
            model,
            sim,
            &target,
            &weight,
        )?;
    }
    w.write("surface.csv", &export::surface_csv(&surface))?;
    w.write_json("surface.json", &export::surface_sidecar(&surface, hash))?;

    let thresholds = section.thresholds.unwrap_or_default();
    let minima = find_minima(&surface, thresholds.tol_equiv(&surface))?;
    let (hessian, note) = match minima.first() {
        Some(best) => {
            let best_params = surface.grid.params_at(params, best.index)?;
            match hessian_plan(&surface.grid, &best_params, section.hessian_step_frac) {
                Some((dims, steps)) => {
                    let dim_refs: Vec<&str> = dims.iter().map(|s| s.as_str()).collect();
                    match abmident_core::smd::hessian(
                        model,
                        &best_params,
                        sim,
                        &target,
                        &weight,
                        &dim_refs,
                        &steps,
                    ) {
                        Ok(h) => (Some(h), None),
                        Err(e) => (None, Some(format!("hessian failed: {e}"))),
                    }
                }
                None => (None, Some("no interior dimension to probe".to_string())),
            }
        }
        None => (None, Some("no minima found".to_string())),
    };
    let report = classify_surface(&surface, &thresholds, hessian.as_ref(), note)?;
    w.write_json("ident_report.json", &export::ident_report_json(&report))?;
    w.write(
        "plot.gp",
        &export::surface_plot_script("surface.csv", &surface),
    )?;
    Ok(())
}

fn run_bayes(
    config: &RunConfig,
    model: &dyn Model,
    params: &ParamVector,
    sim: &SimConfig,
    hash: &str,
    w: &mut Writer,
) -> Result<()> {
    let section = config
        .bayes
        .as_ref()
        .ok_or_else(|| Error::config("bayes: section missing"))?;
    let real_config = section
        .real
        .to_sim_config(config.sim.n_agents, config.sim.noise_scale);
    let y_real = simulate(model, params, &real_config, real_config.master_seed)?;

    let density_sim = section
        .density_sim
        .as_ref()
        .map(|s| s.to_sim_config())
        .unwrap_or_else(|| sim.clone());

    let priors: Vec<(String, abmident_core::bayes::Prior)> = section
        .priors
        .iter()
        .map(|p| (p.name.clone(), p.prior))
        .collect();
    let mcmc = McmcConfig {
        draws: section.mcmc.draws,
        burn_in: section.mcmc.burn_in,
        proposal_scales: section
            .mcmc
            .proposal_scales
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
        chain_seed: section.mcmc.chain_seed,
        jump_prob: section.mcmc.jump_prob,
        jump_scale: section.mcmc.jump_scale,
    };
    let chain = posterior_sample(model, params, &priors, &y_real, &density_sim, &mcmc)?;
    let thresholds = section.thresholds.unwrap_or_default();
    let report = posterior_ident_check(&chain, &thresholds)?;

    w.write("chain.csv", &export::chain_csv(&chain))?;
    w.write_json("chain.json", &export::chain_sidecar(&chain, hash))?;
    w.write_json("ident_report.json", &export::ident_report_json(&report))?;
    w.write("plot.gp", &export::chain_plot_script("chain.csv", &chain))?;
    Ok(())
}

fn run_indirect(
    config: &RunConfig,
    model: &dyn Model,
    params: &ParamVector,
    sim: &SimConfig,
    hash: &str,
    w: &mut Writer,
) -> Result<()> {
    let section = config
        .indirect
        .as_ref()
        .ok_or_else(|| Error::config("indirect: section missing"))?;
    let grid = GridSpec::new(section.grid.clone())?;
    let options = IiOptions {
        match_tol: section.match_tol,
        exclusion_radius: section.exclusion_radius,
        include_resid_var: Some(section.include_resid_var),
        weight: None,
    };
    let report = ii_ident_test(model, params, params, &grid, sim, section.p, &options)?;
    let mut v = export::ii_report_json(&report);
    v["config_hash"] = json!(hash);
    w.write_json("ii_report.json", &v)?;
    w.write("matches.csv", &export::ii_matches_csv(&report))?;
    Ok(())
}

fn run_oracle(
    config: &RunConfig,
    model: &dyn Model,
    params: &ParamVector,
    sim: &SimConfig,
    hash: &str,
    w: &mut Writer,
) -> Result<()> {
    let section = config
        .oracle
        .as_ref()
        .ok_or_else(|| Error::config("oracle: section missing"))?;
    let p = transition_matrix(model, params, sim)?;
    w.write("transition_matrix.csv", &export::transition_matrix_csv(&p))?;
    let pi = stationary_distribution(&p, 1e-10)?;
    w.write("stationary.csv", &export::stationary_csv(&p, &pi))?;
    let analytic = analytic_moment_vector(&pi, Some(&p), &p.measure_values, &section.moments)?;
    w.write_json("moments.json", &export::moments_json(&analytic, hash))?;

    if let Some(grid_dims) = &section.grid {
        let grid = GridSpec::new(grid_dims.clone())?;
        // target: simulated pseudo-real data when configured, otherwise the
        // exact self-target at the base parameters
        let target = match &section.target {
            Some(t) => {
                let real_config = t.to_sim_config(config.sim.n_agents, config.sim.noise_scale);
                build_target(model, params, &real_config, &section.moments)?.0
            }
            None => analytic.clone(),
        };
        let weight = WeightMatrix::identity(target.len());
        let surface = analytic_objective(model, params, &grid, sim, &target, &weight)?;
        w.write("surface.csv", &export::surface_csv(&surface))?;
        w.write_json("surface.json", &export::surface_sidecar(&surface, hash))?;

        let thresholds = section.thresholds.unwrap_or_default();
        let minima = find_minima(&surface, thresholds.tol_equiv(&surface))?;
        let (hessian, note) = match minima.first() {
            Some(best) => {
                let best_params = surface.grid.params_at(params, best.index)?;
                match hessian_plan(&surface.grid, &best_params, 0.5) {
                    Some((dims, steps)) => {
                        let dim_refs: Vec<&str> = dims.iter().map(|s| s.as_str()).collect();
                        let mut f = |theta: &ParamVector| -> Result<f64> {
                            let pm = transition_matrix(model, theta, sim)?;
                            let pim = stationary_distribution(&pm, 1e-10)?;
                            let mv = analytic_moment_vector(
                                &pim,
                                Some(&pm),
                                &pm.measure_values,
                                &target.spec,
                            )?;
                            objective(&target, &mv, &weight)
                        };
                        match hessian_fn(&mut f, &best_params, &dim_refs, &steps) {
                            Ok(h) => (Some(h), None),
                            Err(e) => (None, Some(format!("hessian failed: {e}"))),
                        }
                    }
                    None => (None, Some("no interior dimension to probe".to_string())),
                }
            }
            None => (None, Some("no minima found".to_string())),
        };
        let report = classify_surface(&surface, &thresholds, hessian.as_ref(), note)?;
        w.write_json("ident_report.json", &export::ident_report_json(&report))?;
        w.write(
            "plot.gp",
            &export::surface_plot_script("surface.csv", &surface),
        )?;
    }

    if config.model == "kirman" {
        let n = section
            .fp_grid_points
            .unwrap_or(20 * config.sim.n_agents + 1);
        let eps = params.require("epsilon")?;
        let delta = params.require("delta")?;
        if eps > 0.0 {
            let spec = kirman_fp_spec(config.sim.n_agents, eps, delta, n);
            let density = fp_stationary_density(&spec)?;
            w.write("fp_density.csv", &export::fp_density_csv(&density))?;
        }
    }
    Ok(())
}
